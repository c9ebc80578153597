use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn apexfas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_apexfas"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, num_videos: &str, frames: &str, extra: &[&str]) {
    let mut args = vec!["synth", "--out-dir", p(dir), "--num-videos", num_videos, "--frames", frames, "--size", "16"];
    args.extend_from_slice(extra);
    let out = apexfas(&args);
    assert!(out.status.success(), "{}", stderr(&out));
}

const FAST: &[&str] = &["--grid", "8", "--hidden", "12", "--max-steps", "60", "--t", "20,30", "--seed", "3"];

fn train(manifest: &Path, mode: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--manifest", p(manifest), "--mode", mode, "--out-dir", p(out)];
    args.extend_from_slice(FAST);
    args.extend_from_slice(extra);
    apexfas(&args)
}

fn kv(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("missing {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn help_documents_defaults() {
    let out = apexfas(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    for cmd in ["apex", "segments", "synth", "train", "eval", "roc", "bench"] {
        assert!(stdout(&out).contains(cmd));
    }
    let train_help = stdout(&apexfas(&["train", "--help"]));
    for default in ["[default: 1.5]", "[default: 0.9]", "[default: 5]", "[default: 50,80]", "[default: 0.0001]"] {
        assert!(train_help.contains(default), "{default} missing from\n{train_help}");
    }
    assert!(stdout(&apexfas(&["apex", "--help"])).contains("[default: 5]"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(apexfas(&["apex", "--bogus"]).status.code(), Some(1));
    assert_eq!(apexfas(&[]).status.code(), Some(1));
    assert_eq!(apexfas(&["train", "--manifest", "m.csv", "--mode", "lstm", "--out-dir", "x"]).status.code(), Some(1));
}

#[test]
fn apex_command() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), "5", "60", &[]);
    let video = dir.path().join("videos/A_live_000.afv");
    let out_path = dir.path().join("apex.afv");
    let out = apexfas(&["apex", "--video", p(&video), "--out", p(&out_path)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("sigma=5"));
    assert!(out_path.exists());
    assert!(dir.path().join("apex.pgm").exists());

    let missing = dir.path().join("nope.afv");
    let out = apexfas(&["apex", "--video", p(&missing), "--out", p(&out_path)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("nope.afv"));

    let out = apexfas(&["apex", "--video", p(&video), "--out", p(&out_path), "--sigma", "0"]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("sigma"));
}

#[test]
fn segments_command() {
    let dir = tempfile::tempdir().unwrap();
    synth(&dir.path().join("d"), "1", "100", &[]);
    let video = dir.path().join("d/videos/A_live_000.afv");
    let seg = dir.path().join("seg");
    let out = apexfas(&["segments", "--video", p(&video), "--out-dir", p(&seg)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let mut names: Vec<String> = fs::read_dir(&seg)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    assert_eq!(
        names,
        [
            "A_live_000_50_1_50.afv",
            "A_live_000_50_51_100.afv",
            "A_live_000_80_1_80.afv",
            "A_live_000_80_81_100.afv",
            "unlabeled_manifest.csv"
        ]
    );
    let manifest = fs::read_to_string(seg.join("unlabeled_manifest.csv")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains(",unlabeled,")).count(), 4);

    let long = dir.path().join("long");
    let out = apexfas(&["segments", "--video", p(&video), "--out-dir", p(&long), "--t", "150,200"]);
    assert!(out.status.success());
    assert!(long.join("A_live_000_150_1_100.afv").exists());
    assert!(long.join("A_live_000_200_1_100.afv").exists());
}

#[test]
fn synth_command_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    synth(&a, "5", "60", &["--seed", "11"]);
    synth(&b, "5", "60", &["--seed", "11"]);
    let manifest = fs::read_to_string(a.join("manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 20);
    assert_eq!(manifest, fs::read_to_string(b.join("manifest.csv")).unwrap());
    for entry in fs::read_dir(a.join("videos")).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            fs::read(a.join("videos").join(&name)).unwrap(),
            fs::read(b.join("videos").join(&name)).unwrap()
        );
    }
    assert!(a.join("manifest_A.csv").exists() && a.join("manifest_B.csv").exists());

    let cfg = dir.path().join("synth.cfg");
    fs::write(&cfg, "num_videos = 2\nframes = 10\nsize = 8\n").unwrap();
    let c = dir.path().join("c");
    let out = apexfas(&["synth", "--out-dir", p(&c), "--config", p(&cfg)]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("num_videos = 2"));
    assert_eq!(fs::read_to_string(c.join("manifest.csv")).unwrap().lines().count(), 8);
}

#[test]
fn train_and_eval_commands() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "5", "60", &[]);
    let source = data.join("manifest_A.csv");
    let target = data.join("manifest_B.csv");

    let sup = dir.path().join("sup");
    let out = train(&source, "supervised", &sup, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("lambda=1.5"));
    let report = fs::read_to_string(sup.join("report.csv")).unwrap();
    assert!(report.starts_with("step,l_labeled,l_unlabeled,l,accepted_count,val_auc"));

    let zero = dir.path().join("zero");
    assert!(train(&source, "ssl", &zero, &["--lambda", "0"]).status.success());
    assert_eq!(fs::read(sup.join("mlp.afm")).unwrap(), fs::read(zero.join("mlp.afm")).unwrap());

    let full = dir.path().join("full");
    let out = train(&source, "ssl+lstm", &full, &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(full.join("mlp.afm").exists() && full.join("lstm.afm").exists());
    assert!(full.join("lstm_report.csv").exists());

    let same = dir.path().join("same.txt");
    let out = apexfas(&[
        "eval", "--source-manifest", p(&source), "--target-manifest", p(&source), "--mode", "supervised",
        "--checkpoint-dir", p(&sup), "--out", p(&same),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&same).unwrap();
    assert_eq!(kv(&text, "hter"), kv(&text, "eer"));
    kv(&text, "threshold");
    kv(&text, "auc");

    for mode in ["ssl", "ssl+lstm"] {
        let cross = dir.path().join(format!("cross_{mode}.txt"));
        let scores = dir.path().join(format!("scores_{mode}"));
        let out = apexfas(&[
            "eval", "--source-manifest", p(&source), "--target-manifest", p(&target), "--mode", mode,
            "--checkpoint-dir", p(&full), "--out", p(&cross), "--scores-dir", p(&scores),
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = fs::read_to_string(&cross).unwrap();
        for key in ["eer", "threshold", "hter", "auc", "far", "frr"] {
            let v = kv(&text, key);
            assert!(v.is_finite());
            if key != "threshold" {
                assert!((0.0..=1.0).contains(&v), "{key}={v}");
            }
        }
        assert!(scores.join("target_scores.csv").exists());
    }

    let out = apexfas(&[
        "eval", "--source-manifest", p(&source), "--target-manifest", p(&target), "--mode", "ssl+lstm",
        "--checkpoint-dir", p(&sup), "--out", p(&same),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn roc_command() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("scores.csv");
    let (svg, roc) = (dir.path().join("roc.svg"), dir.path().join("roc.csv"));
    fs::write(&csv, "id,score,label\na,0.1,spoof\nb,0.4,spoof\nc,0.35,live\nd,0.8,live\n").unwrap();
    let out = apexfas(&["roc", "--scores-csv", p(&csv), "--out-svg", p(&svg), "--out-csv", p(&roc)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("auc=0.75"));
    assert!(fs::read_to_string(&svg).unwrap().contains("<svg"));
    assert!(fs::read_to_string(&roc).unwrap().starts_with("threshold,fpr,tpr"));

    fs::write(&csv, "").unwrap();
    assert_eq!(apexfas(&["roc", "--scores-csv", p(&csv), "--out-svg", p(&svg), "--out-csv", p(&roc)]).status.code(), Some(2));
    fs::write(&csv, "score,label\n0.2,live\n0.9,live\n").unwrap();
    let out = apexfas(&["roc", "--scores-csv", p(&csv), "--out-svg", p(&svg), "--out-csv", p(&roc)]);
    assert_eq!(out.status.code(), Some(2));
}

fn bench_ms(frames: usize) -> f64 {
    let out = apexfas(&["bench", "--frames", &frames.to_string(), "--size", "64", "--reps", "5"]);
    assert!(out.status.success(), "{}", stderr(&out));
    kv(&stdout(&out), "ms_per_video")
}

#[test]
fn bench_command() {
    let out = apexfas(&["bench", "--reps", "3"]);
    assert!(out.status.success());
    kv(&stdout(&out), "frames_per_sec");
    kv(&stdout(&out), "ms_per_video");
    assert_eq!(apexfas(&["bench", "--reps", "2"]).status.code(), Some(1));

    // Linear in the frame count once both videos stream from memory; best
    // of three to ride out scheduler noise.
    let ratio = (0..3)
        .map(|_| bench_ms(2000) / bench_ms(1000))
        .min_by(|a, b| (a - 2.0).abs().total_cmp(&(b - 2.0).abs()))
        .unwrap();
    assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
}
