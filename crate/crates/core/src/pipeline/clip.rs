use crate::error::{contract_err, Result};
use crate::numerics::Rng;

/// Frames of one training clip: `T` seen frames at stride `s`, and the
/// in-range frames between them held out as unseen views.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClipSample {
    pub seen: Vec<usize>,
    pub unseen: Vec<usize>,
    pub stride: usize,
}

impl ClipSample {
    pub fn start(&self) -> usize {
        self.seen[0]
    }
}

/// Clip with a fixed start frame `f0`.
pub fn clip_at(num_frames: usize, frames: usize, stride: usize, f0: usize) -> Result<ClipSample> {
    if frames == 0 || stride == 0 {
        return Err(contract_err!("clip needs T ≥ 1 and s ≥ 1"));
    }
    let span = stride * (frames - 1);
    if f0 + span >= num_frames {
        return Err(contract_err!(
            "clip of T = {frames} frames at stride {stride} starting at {f0} needs {} source frames, have {num_frames}",
            f0 + span + 1
        ));
    }
    let seen: Vec<usize> = (0..frames).map(|i| f0 + i * stride).collect();
    let unseen = (f0..=f0 + span).filter(|f| (f - f0) % stride != 0).collect();
    Ok(ClipSample { seen, unseen, stride })
}

/// Clip with a uniformly random valid start frame.
pub fn sample_clip(num_frames: usize, frames: usize, stride: usize, rng: &mut Rng) -> Result<ClipSample> {
    if frames == 0 || stride == 0 {
        return Err(contract_err!("clip needs T ≥ 1 and s ≥ 1"));
    }
    let span = stride * (frames - 1);
    if span >= num_frames {
        return Err(contract_err!(
            "clip of T = {frames} frames at stride {stride} needs {} source frames, have {num_frames}",
            span + 1
        ));
    }
    let f0 = rng.below(num_frames - span);
    clip_at(num_frames, frames, stride, f0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerated_example() {
        let c = clip_at(13, 5, 3, 0).unwrap();
        assert_eq!(c.seen, vec![0, 3, 6, 9, 12]);
        assert_eq!(c.unseen, vec![1, 2, 4, 5, 7, 8, 10, 11]);
        assert!(clip_at(13, 5, 1, 0).unwrap().unseen.is_empty());
        assert!(sample_clip(10, 5, 3, &mut Rng::seed(0)).is_err());
    }
}
