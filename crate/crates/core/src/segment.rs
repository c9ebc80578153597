//! Fixed-length segmentation and the multi-length unlabeled apex pool.
//!
//! Segments are disjoint windows of `t` frames with stride `t`. A trailing
//! partial window is kept only when it has at least [`MIN_SEGMENT_LEN`]
//! frames. Each segment's Gaussian is centered on its own middle frame.

use crate::apex::{centered_weights, check_sigma, weighted_sum};
use crate::error::{Error, Result};
use crate::tensor_io::{ApexFrame, Frame, VideoTensor};

pub const MIN_SEGMENT_LEN: usize = 3;
pub const DEFAULT_TEMPORAL_LENGTHS: [usize; 2] = [50, 80];

/// Frames `start..=end` (1-based) of a source video.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'a> {
    pub source_id: &'a str,
    pub start: usize,
    pub end: usize,
    pub frames: &'a [Frame],
}

impl Segment<'_> {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// 1-based inclusive bounds of the segments kept for an `n`-frame video.
pub fn segment_bounds(n: usize, t: usize) -> Result<Vec<(usize, usize)>> {
    if t == 0 {
        return Err(Error::InvalidParameter("temporal length must be at least 1".into()));
    }
    let mut bounds = Vec::with_capacity(n / t + 1);
    let mut start = 1;
    while start + t - 1 <= n {
        bounds.push((start, start + t - 1));
        start += t;
    }
    if start <= n && n - start + 1 >= MIN_SEGMENT_LEN {
        bounds.push((start, n));
    }
    Ok(bounds)
}

pub fn split_segments(video: &VideoTensor, t: usize) -> Result<Vec<Segment<'_>>> {
    Ok(segment_bounds(video.len(), t)?
        .into_iter()
        .map(|(start, end)| Segment {
            source_id: video.id(),
            start,
            end,
            frames: &video.frames()[start - 1..end],
        })
        .collect())
}

pub fn segment_apex(segment: &Segment<'_>, sigma: f64) -> Result<ApexFrame> {
    let weights = centered_weights(segment.frames.len(), sigma)?;
    Ok(ApexFrame {
        frame: weighted_sum(segment.frames, &weights.values),
        source_id: segment.source_id.to_string(),
        segment_start: segment.start,
        segment_end: segment.end,
        sigma,
    })
}

/// Apex frames for every segment of `video` at temporal length `t`.
pub fn segment_apexes(video: &VideoTensor, t: usize, sigma: f64) -> Result<Vec<ApexFrame>> {
    check_sigma(sigma)?;
    split_segments(video, t)?
        .iter()
        .map(|s| segment_apex(s, sigma))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledPool {
    pub apexes: Vec<ApexFrame>,
    pub temporal_lengths: Vec<usize>,
    pub sigma: f64,
}

impl UnlabeledPool {
    pub fn len(&self) -> usize {
        self.apexes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apexes.is_empty()
    }
}

/// Segment apexes ordered by video, then temporal length, then segment.
pub fn build_unlabeled_pool(
    videos: &[VideoTensor],
    temporal_lengths: &[usize],
    sigma: f64,
) -> Result<UnlabeledPool> {
    if videos.is_empty() {
        return Err(Error::Empty("no videos for the unlabeled pool".into()));
    }
    if temporal_lengths.is_empty() {
        return Err(Error::Empty("no temporal lengths for the unlabeled pool".into()));
    }
    check_sigma(sigma)?;
    let mut apexes = Vec::new();
    for video in videos {
        for &t in temporal_lengths {
            apexes.extend(segment_apexes(video, t, sigma)?);
        }
    }
    Ok(UnlabeledPool {
        apexes,
        temporal_lengths: temporal_lengths.to_vec(),
        sigma,
    })
}

/// Number of segments kept for an `n`-frame video at temporal length `t`.
pub fn segment_count(n: usize, t: usize) -> usize {
    if t == 0 {
        return 0;
    }
    n / t + usize::from(n % t >= MIN_SEGMENT_LEN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apex::apex_frame;

    fn ramp_video(n: usize) -> VideoTensor {
        let frames = (0..n)
            .map(|i| Frame::filled(2, 2, 1, i as f32 / n as f32).unwrap())
            .collect();
        VideoTensor::new("ramp", frames).unwrap()
    }

    #[test]
    fn split_examples() {
        assert_eq!(segment_bounds(100, 50).unwrap(), vec![(1, 50), (51, 100)]);
        assert_eq!(
            segment_bounds(130, 50).unwrap(),
            vec![(1, 50), (51, 100), (101, 130)]
        );
        assert_eq!(segment_bounds(101, 50).unwrap(), vec![(1, 50), (51, 100)]);
        assert_eq!(segment_bounds(102, 50).unwrap(), vec![(1, 50), (51, 100)]);
        assert_eq!(
            segment_bounds(103, 50).unwrap(),
            vec![(1, 50), (51, 100), (101, 103)]
        );
        assert_eq!(segment_bounds(40, 50).unwrap(), vec![(1, 40)]);
        assert_eq!(segment_bounds(50, 50).unwrap(), vec![(1, 50)]);
        assert_eq!(segment_bounds(3, 50).unwrap(), vec![(1, 3)]);
        assert!(segment_bounds(2, 50).unwrap().is_empty());
        assert_eq!(segment_bounds(2, 2).unwrap(), vec![(1, 2)]);
        assert!(segment_bounds(10, 0).is_err());
    }

    #[test]
    fn segments_view_the_right_frames() {
        let v = ramp_video(130);
        let segs = split_segments(&v, 50).unwrap();
        assert_eq!(segs.len(), 3);
        assert_eq!(segs[2].len(), 30);
        assert_eq!(segs[1].frames[0], v.frames()[50]);
    }

    #[test]
    fn whole_video_segment_equals_apex() {
        let v = ramp_video(37);
        let seg = &split_segments(&v, 37).unwrap()[0];
        assert_eq!(segment_apex(seg, 5.0).unwrap(), apex_frame(&v, 5.0).unwrap());
    }

    #[test]
    fn symmetric_segment_gives_middle_value() {
        let frames = [0.2f32, 0.4, 0.6]
            .iter()
            .map(|&v| Frame::filled(1, 1, 1, v).unwrap())
            .collect();
        let v = VideoTensor::new("s", frames).unwrap();
        let seg = &split_segments(&v, 3).unwrap()[0];
        let apex = segment_apex(seg, 1.0).unwrap();
        assert!((apex.frame.pixels()[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn pool_counts() {
        let v = ramp_video(100);
        let pool = build_unlabeled_pool(std::slice::from_ref(&v), &[50], 5.0).unwrap();
        assert_eq!(pool.len(), 2);

        let pool = build_unlabeled_pool(std::slice::from_ref(&v), &[50, 80], 5.0).unwrap();
        let bounds: Vec<_> = pool
            .apexes
            .iter()
            .map(|a| (a.segment_start, a.segment_end))
            .collect();
        assert_eq!(bounds, vec![(1, 50), (51, 100), (1, 80), (81, 100)]);
    }

    #[test]
    fn pool_rejects_empty_inputs() {
        assert!(build_unlabeled_pool(&[], &[50], 5.0).is_err());
        assert!(build_unlabeled_pool(&[ramp_video(5)], &[], 5.0).is_err());
        assert!(build_unlabeled_pool(&[ramp_video(5)], &[2], 0.0).is_err());
    }

    #[test]
    fn segment_count_matches_bounds() {
        for n in 1..200 {
            for t in 1..90 {
                assert_eq!(segment_count(n, t), segment_bounds(n, t).unwrap().len(), "n={n} t={t}");
            }
        }
    }
}
