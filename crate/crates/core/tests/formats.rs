mod common;

use std::path::Path;

use apexfas::model::checkpoint::{decode_tensors, encode_tensors, read_checkpoint, write_checkpoint};
use apexfas::model::{LstmParams, MlpParams, Parameters, Standardizer, Tensor};
use apexfas::tensor_io::{
    decode_video, encode_frame_image, encode_video, load_manifest, read_video, write_manifest, write_video,
    DatasetManifest, Frame, Label, ManifestEntry, Split, VideoTensor,
};
use apexfas::train::{LstmModel, MlpModel};
use apexfas::Error;
use common::{random_video, rng};
use proptest::prelude::*;
use rand::Rng;

fn bits(t: &[Tensor]) -> Vec<(String, Vec<usize>, Vec<u64>)> {
    t.iter()
        .map(|t| (t.name.clone(), t.shape.clone(), t.data.iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn video_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(401);
    for i in 0..100 {
        let (n, h, w) = (r.gen_range(1..8), r.gen_range(1..9), r.gen_range(1..9));
        let c = if r.gen_bool(0.5) { 1 } else { 3 };
        let video = random_video(&mut r, n, h, w, c);
        let path = dir.path().join(format!("clip{i}.afv"));
        write_video(&video, &path).unwrap();
        let back = read_video(&path).unwrap();
        assert_eq!(back.id(), format!("clip{i}"));
        let a: Vec<u32> = video.frames().iter().flat_map(|f| f.pixels().iter().map(|p| p.to_bits())).collect();
        let b: Vec<u32> = back.frames().iter().flat_map(|f| f.pixels().iter().map(|p| p.to_bits())).collect();
        assert_eq!(a, b);
        assert_eq!((back.len(), back.height(), back.width(), back.channels()), (n, h, w, c));
    }
}

#[test]
fn checkpoints_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(402);
    for i in 0..100 {
        let (d, h) = (r.gen_range(1..10), r.gen_range(1..6));
        let tensors: Vec<Tensor> = if i % 2 == 0 {
            MlpParams::init(d, h, &mut r).tensors().into_iter().cloned().collect()
        } else {
            LstmParams::init(d, h, &mut r).tensors().into_iter().cloned().collect()
        };
        let path = dir.path().join(format!("m{i}.afm"));
        write_checkpoint(&tensors, &path).unwrap();
        assert_eq!(bits(&read_checkpoint(&path).unwrap()), bits(&tensors));
    }
}

#[test]
fn models_round_trip_with_feature_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(403);
    let standardizer = Standardizer {
        mean: (0..4).map(|_| r.gen()).collect(),
        scale: (0..4).map(|_| r.gen_range(0.5..2.0)).collect(),
    };
    let mlp = MlpModel {
        params: MlpParams::init(4, 3, &mut r),
        standardizer: standardizer.clone(),
        grid: 2,
        sigma: 5.0,
    };
    mlp.save(dir.path().join("mlp.afm")).unwrap();
    assert_eq!(MlpModel::load(dir.path().join("mlp.afm")).unwrap(), mlp);

    let lstm = LstmModel {
        params: LstmParams::init(4, 3, &mut r),
        standardizer,
        grid: 2,
        sigma: 2.5,
        temporal_length: 50,
    };
    lstm.save(dir.path().join("lstm.afm")).unwrap();
    assert_eq!(LstmModel::load(dir.path().join("lstm.afm")).unwrap(), lstm);
    assert!(LstmModel::load(dir.path().join("mlp.afm")).is_err());
}

#[test]
fn corrupt_inputs_are_reported() {
    let mut r = rng(404);
    let video = random_video(&mut r, 3, 2, 2, 1);
    let bytes = encode_video(&video);
    let p = Path::new("x.afv");
    assert!(matches!(decode_video("x", &bytes[..bytes.len() - 2], p), Err(Error::Truncated { .. })));
    assert!(matches!(decode_video("x", b"AFM1....", p), Err(Error::BadMagic { .. })));
    let mut bad = bytes.clone();
    let last = bad.len() - 4;
    bad[last..].copy_from_slice(&1.5f32.to_le_bytes());
    assert!(matches!(decode_video("x", &bad, p), Err(Error::PixelOutOfRange { .. })));
    assert!(matches!(decode_tensors(b"AFV1", p), Err(Error::BadMagic { .. })));
    assert!(read_video("/definitely/not/here.afv").is_err());
}

#[test]
fn preview_images_round_half_up() {
    let gray = Frame::new(1, 3, 1, vec![0.0, 0.5, 1.0]).unwrap();
    let pgm = encode_frame_image(&gray);
    assert!(pgm.starts_with(b"P5\n3 1\n255\n"));
    assert_eq!(&pgm[pgm.len() - 3..], &[0, 128, 255]);
    let color = Frame::filled(1, 1, 3, 1.0).unwrap();
    assert!(encode_frame_image(&color).starts_with(b"P6\n"));
}

#[test]
fn manifests_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = rng(405);
    let mut manifest = DatasetManifest {
        base_dir: dir.path().to_path_buf(),
        entries: Vec::new(),
    };
    for i in 0..6 {
        let name = format!("v{i}.afv");
        write_video(&random_video(&mut r, 2, 2, 2, 1), dir.path().join(&name)).unwrap();
        manifest.entries.push(ManifestEntry {
            video_path: name.into(),
            label: [Label::Live, Label::Spoof, Label::Unlabeled][i % 3],
            split: [Split::Train, Split::Val, Split::Test][i / 2],
            domain_tag: if i < 3 { "A".into() } else { "B".into() },
        });
    }
    let path = dir.path().join("m.csv");
    write_manifest(&manifest, &path).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back.entries, manifest.entries);
    assert_eq!(back.domains(), vec!["A".to_string(), "B".to_string()]);
    assert_eq!(back.split(Split::Val).entries.len(), 2);

    std::fs::write(&path, "path,label,split,domain_tag\nmissing.afv,live,train,A\n").unwrap();
    assert!(load_manifest(&path).is_err());
    std::fs::write(&path, "path,label,split,domain_tag\nv0.afv,maybe,train,A\n").unwrap();
    assert!(matches!(load_manifest(&path), Err(Error::Manifest { .. })));
}

proptest! {
    #[test]
    fn video_bytes_round_trip(n in 1usize..5, h in 1usize..6, w in 1usize..6, color in prop::bool::ANY, seed in 0u64..1000) {
        let mut r = rng(seed);
        let video = random_video(&mut r, n, h, w, if color { 3 } else { 1 });
        let bytes = encode_video(&video);
        prop_assert_eq!(bytes.len(), 20 + 4 * n * h * w * video.channels());
        let back = decode_video(video.id(), &bytes, Path::new("p")).unwrap();
        prop_assert_eq!(encode_video(&back), bytes);
    }

    #[test]
    fn tensor_bytes_round_trip(values in prop::collection::vec(prop::num::f64::ANY, 0..40)) {
        let t = vec![Tensor { name: "t".into(), shape: vec![values.len()], data: values }];
        let back = decode_tensors(&encode_tensors(&t), Path::new("p")).unwrap();
        prop_assert_eq!(bits(&back), bits(&t));
    }

    #[test]
    fn single_frame_video_id_is_preserved(value in 0.0f32..=1.0) {
        let video = VideoTensor::new("solo", vec![Frame::filled(2, 2, 1, value).unwrap()]).unwrap();
        let back = decode_video("solo", &encode_video(&video), Path::new("p")).unwrap();
        prop_assert_eq!(back, video);
    }
}
