//! Keyframes, visual paths, simulated feature matching and the statistics
//! computed over matched horizontal coordinates.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{LoadError, NavError, Result};
use crate::geometry::{CameraModel, LandmarkId, Observations, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub index: usize,
    /// Ground-truth pose at which the keyframe was recorded. Evaluation only.
    pub pose_truth: Pose,
    pub observations: Observations,
}

/// A feature tracked across a whole segment, with its coordinate in the
/// segment's start and end keyframes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentFeature {
    pub id: LandmarkId,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVisualPath")]
pub struct VisualPath {
    keyframes: Vec<Keyframe>,
    /// `segments[j]` joins `keyframes[j]` and `keyframes[j + 1]`.
    segments: Vec<Vec<SegmentFeature>>,
}

#[derive(Deserialize)]
struct RawVisualPath {
    keyframes: Vec<Keyframe>,
    segments: Vec<Vec<SegmentFeature>>,
}

impl TryFrom<RawVisualPath> for VisualPath {
    type Error = NavError;

    fn try_from(raw: RawVisualPath) -> Result<Self> {
        VisualPath::new(raw.keyframes, raw.segments)
    }
}

impl VisualPath {
    pub fn new(keyframes: Vec<Keyframe>, segments: Vec<Vec<SegmentFeature>>) -> Result<Self> {
        if keyframes.len() < 2 {
            return Err(NavError::InvalidPath(format!(
                "need at least 2 keyframes, got {}",
                keyframes.len()
            )));
        }
        if segments.len() != keyframes.len() - 1 {
            return Err(NavError::InvalidPath(format!(
                "{} keyframes need {} segments, got {}",
                keyframes.len(),
                keyframes.len() - 1,
                segments.len()
            )));
        }
        for (i, kf) in keyframes.iter().enumerate() {
            if kf.index != i {
                return Err(NavError::InvalidPath(format!(
                    "keyframe at position {i} carries index {}",
                    kf.index
                )));
            }
            if kf.observations.is_empty() {
                return Err(NavError::InvalidPath(format!(
                    "keyframe {i} has no observations"
                )));
            }
            if kf.observations.values().any(|u| !u.is_finite()) {
                return Err(NavError::InvalidPath(format!(
                    "keyframe {i} has a non-finite coordinate"
                )));
            }
        }
        for (j, pair) in keyframes.windows(2).enumerate() {
            let shared = pair[0]
                .observations
                .keys()
                .any(|id| pair[1].observations.contains_key(id));
            if !shared {
                return Err(NavError::InvalidPath(format!(
                    "keyframes {j} and {} share no observation",
                    j + 1
                )));
            }
        }
        for (j, seg) in segments.iter().enumerate() {
            for f in seg {
                let at_start = keyframes[j].observations.get(&f.id);
                let at_end = keyframes[j + 1].observations.get(&f.id);
                if at_start != Some(&f.start) || at_end != Some(&f.end) {
                    return Err(NavError::InvalidPath(format!(
                        "segment {j} feature {} disagrees with its keyframes",
                        f.id
                    )));
                }
            }
        }
        Ok(Self {
            keyframes,
            segments,
        })
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.keyframes
    }

    pub fn segments(&self) -> &[Vec<SegmentFeature>] {
        &self.segments
    }

    pub fn segment_count(&self) -> usize {
        self.segments.len()
    }

    /// Destination coordinates used while driving segment `j`: the features
    /// tracked through the segment, at the segment's end keyframe. Falls back
    /// to all observations of the end keyframe when nothing was tracked.
    pub fn destination(&self, segment: usize) -> Observations {
        let stored = &self.segments[segment];
        if stored.is_empty() {
            self.keyframes[segment + 1].observations.clone()
        } else {
            stored.iter().map(|f| (f.id, f.end)).collect()
        }
    }

    /// Checks every stored coordinate against the camera's image border.
    pub fn check_camera(&self, cam: &CameraModel) -> Result<()> {
        for kf in &self.keyframes {
            if let Some((id, u)) = kf
                .observations
                .iter()
                .find(|(_, u)| u.abs() > cam.half_width)
            {
                return Err(NavError::InvalidPath(format!(
                    "keyframe {} feature {id} at {u} px lies outside the image",
                    kf.index
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("visual path serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    pub fn read(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::io(path, e))?;
        Self::from_json(&text).map_err(|e| LoadError::parse(path, e.to_string()))
    }
}

/// One correspondence: coordinate in the current image and in the destination image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub id: LandmarkId,
    pub current: f64,
    pub destination: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchSet {
    pairs: Vec<MatchPair>,
}

impl MatchSet {
    /// Pairs are kept sorted by id. Panics on duplicate ids.
    pub fn new(mut pairs: Vec<MatchPair>) -> Self {
        pairs.sort_by_key(|p| p.id);
        assert!(
            pairs.windows(2).all(|w| w[0].id != w[1].id),
            "duplicate id in match set"
        );
        Self { pairs }
    }

    /// Builds a match set from `(current, destination)` coordinate pairs with ids `0..n`.
    pub fn from_coords(coords: &[(f64, f64)]) -> Self {
        Self::new(
            coords
                .iter()
                .enumerate()
                .map(|(i, &(current, destination))| MatchPair {
                    id: i as LandmarkId,
                    current,
                    destination,
                })
                .collect(),
        )
    }

    /// Noise-free intersection of two observation sets.
    pub fn exact(current: &Observations, destination: &Observations) -> Self {
        Self {
            pairs: current
                .iter()
                .filter_map(|(&id, &c)| {
                    destination.get(&id).map(|&d| MatchPair {
                        id,
                        current: c,
                        destination: d,
                    })
                })
                .collect(),
        }
    }

    pub fn pairs(&self) -> &[MatchPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = LandmarkId> + '_ {
        self.pairs.iter().map(|p| p.id)
    }

    pub fn current(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.current).collect()
    }

    pub fn destination(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.destination).collect()
    }

    /// Same correspondences with the two images exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| MatchPair {
                    id: p.id,
                    current: p.destination,
                    destination: p.current,
                })
                .collect(),
        }
    }

    /// Applies `f` to every `(current, destination)` pair.
    pub fn map(&self, mut f: impl FnMut(f64, f64) -> (f64, f64)) -> Self {
        Self {
            pairs: self
                .pairs
                .iter()
                .map(|p| {
                    let (current, destination) = f(p.current, p.destination);
                    MatchPair {
                        id: p.id,
                        current,
                        destination,
                    }
                })
                .collect(),
        }
    }

    /// Partitions by the side of the destination image; a destination
    /// coordinate of exactly zero counts as right.
    pub fn split_sides(&self) -> (MatchSet, MatchSet) {
        let (right, left): (Vec<_>, Vec<_>) = self.pairs.iter().partition(|p| p.destination >= 0.0);
        (MatchSet { pairs: left }, MatchSet { pairs: right })
    }

    /// Ratio of the current-image spread to the destination-image spread.
    pub fn std_ratio(&self) -> Result<f64> {
        let spread_dest = population_std(&self.destination());
        if self.pairs.len() < 2 || spread_dest <= 0.0 {
            return Err(NavError::DegenerateSpread {
                matches: self.pairs.len(),
            });
        }
        Ok(population_std(&self.current()) / spread_dest)
    }

    /// Absolute difference between the medians of the two coordinate columns.
    pub fn median_distance(&self) -> Result<f64> {
        let current = median(&self.current()).ok_or(NavError::EmptyMatch)?;
        let destination = median(&self.destination()).ok_or(NavError::EmptyMatch)?;
        Ok((current - destination).abs())
    }

    /// Mean squared coordinate difference, pixels squared.
    pub fn mse(&self) -> Result<f64> {
        if self.pairs.is_empty() {
            return Err(NavError::EmptyMatch);
        }
        let sum: f64 = self
            .pairs
            .iter()
            .map(|p| (p.current - p.destination).powi(2))
            .sum();
        Ok(sum / self.pairs.len() as f64)
    }
}

/// Population standard deviation; zero for fewer than two values.
pub fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Median; the mean of the two middle values for an even count.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    Some(if sorted.len().is_multiple_of(2) {
        0.5 * (sorted[mid - 1] + sorted[mid])
    } else {
        sorted[mid]
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseModel {
    /// Probability that a common feature fails to match.
    pub dropout_prob: f64,
    /// Standard deviation of the additive coordinate noise, pixels.
    pub pixel_sigma: f64,
    /// Per-tick probability that a tracked feature is lost while still visible.
    pub track_dropout_prob: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless(0)
    }
}

impl NoiseModel {
    pub fn noiseless(seed: u64) -> Self {
        Self {
            dropout_prob: 0.0,
            pixel_sigma: 0.0,
            track_dropout_prob: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("dropout_prob", self.dropout_prob),
            ("track_dropout_prob", self.track_dropout_prob),
        ] {
            if !(0.0..1.0).contains(&p) {
                return Err(NavError::InvalidConfig(format!(
                    "{name} must lie in [0, 1), got {p}"
                )));
            }
        }
        if !(self.pixel_sigma.is_finite() && self.pixel_sigma >= 0.0) {
            return Err(NavError::InvalidConfig(format!(
                "pixel_sigma must be >= 0, got {}",
                self.pixel_sigma
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

/// Seeded feature matcher standing in for descriptor matching and tracking.
///
/// Every common id consumes one uniform draw for dropout, in ascending id
/// order, and each survivor one truncated-normal draw when `pixel_sigma > 0`.
#[derive(Debug, Clone)]
pub struct Matcher {
    noise: NoiseModel,
    rng: ChaCha8Rng,
}

impl Matcher {
    pub fn new(noise: NoiseModel) -> Self {
        Self {
            noise,
            rng: ChaCha8Rng::seed_from_u64(noise.seed),
        }
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Matches the current observations against destination coordinates.
    pub fn match_features(
        &mut self,
        current: &Observations,
        destination: &Observations,
    ) -> MatchSet {
        let mut pairs = Vec::new();
        for (&id, &c) in current {
            let Some(&d) = destination.get(&id) else {
                continue;
            };
            let draw: f64 = self.rng.random();
            if draw < self.noise.dropout_prob {
                continue;
            }
            pairs.push(MatchPair {
                id,
                current: c + self.pixel_noise(),
                destination: d,
            });
        }
        MatchSet { pairs }
    }

    /// Follows already-matched features into a new frame: features that are
    /// no longer visible are lost, survivors get fresh coordinates. With a
    /// positive `track_dropout_prob` each visible feature first takes one
    /// uniform draw and is lost when it falls below that probability.
    pub fn track(&mut self, tracked: &MatchSet, current: &Observations) -> MatchSet {
        let mut pairs = Vec::with_capacity(tracked.len());
        for p in tracked.pairs() {
            if let Some(&c) = current.get(&p.id) {
                if self.noise.track_dropout_prob > 0.0 {
                    let draw: f64 = self.rng.random();
                    if draw < self.noise.track_dropout_prob {
                        continue;
                    }
                }
                pairs.push(MatchPair {
                    id: p.id,
                    current: c + self.pixel_noise(),
                    destination: p.destination,
                });
            }
        }
        MatchSet { pairs }
    }

    fn pixel_noise(&mut self) -> f64 {
        if self.noise.pixel_sigma <= 0.0 {
            return 0.0;
        }
        loop {
            let z: f64 = self.rng.sample(StandardNormal);
            if z.abs() <= 3.0 {
                return z * self.noise.pixel_sigma;
            }
        }
    }
}

/// Ids observed in both sets.
pub fn common_ids(a: &Observations, b: &Observations) -> BTreeSet<LandmarkId> {
    a.keys().filter(|id| b.contains_key(id)).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(pairs: &[(LandmarkId, f64)]) -> Observations {
        pairs.iter().copied().collect()
    }

    #[test]
    fn disjoint_ids_give_empty_match() {
        let mut m = Matcher::new(NoiseModel::noiseless(1));
        let got = m.match_features(&obs(&[(1, 3.0), (2, 4.0)]), &obs(&[(3, 1.0)]));
        assert!(got.is_empty());
    }

    #[test]
    fn identical_noiseless_observations_match_exactly() {
        let o = obs(&[(1, -30.0), (4, 12.5), (9, 70.0)]);
        let got = Matcher::new(NoiseModel::noiseless(7)).match_features(&o, &o);
        assert_eq!(got.len(), 3);
        assert!(got.pairs().iter().all(|p| p.current == p.destination));
    }

    #[test]
    fn seeded_dropout_replays_generator() {
        let o: Observations = (0..10).map(|i| (i, i as f64 * 10.0 - 45.0)).collect();
        let noise = NoiseModel {
            dropout_prob: 0.3,
            ..NoiseModel::noiseless(2024)
        };
        let got: Vec<_> = Matcher::new(noise).match_features(&o, &o).ids().collect();

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let expected: Vec<LandmarkId> = (0..10).filter(|_| rng.random::<f64>() >= 0.3).collect();
        assert_eq!(got, expected);
        assert!(!got.is_empty() && got.len() < 10);
    }

    #[test]
    fn pixel_noise_is_truncated_at_three_sigma() {
        let o: Observations = (0..2000).map(|i| (i, 0.0)).collect();
        let noise = NoiseModel {
            pixel_sigma: 2.0,
            ..NoiseModel::noiseless(3)
        };
        let m = Matcher::new(noise).match_features(&o, &o);
        assert!(m.pairs().iter().all(|p| p.current.abs() <= 6.0));
        assert!(m.pairs().iter().all(|p| p.destination == 0.0));
        let sd = population_std(&m.current());
        assert!((sd - 2.0).abs() < 0.2, "sd {sd}");
    }

    #[test]
    fn tracking_drops_invisible_features_without_new_ones() {
        let matched = MatchSet::from_coords(&[(1.0, 2.0), (3.0, 4.0), (5.0, 6.0)]);
        let now = obs(&[(0, 1.5), (2, 5.5), (7, 0.0)]);
        let tracked = Matcher::new(NoiseModel::noiseless(0)).track(&matched, &now);
        assert_eq!(tracked.ids().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(tracked.pairs()[1].current, 5.5);
        assert_eq!(tracked.pairs()[1].destination, 6.0);
    }

    #[test]
    fn tracking_dropout_replays_generator() {
        let o: Observations = (0..20).map(|i| (i, i as f64)).collect();
        let all = Matcher::new(NoiseModel::noiseless(0)).match_features(&o, &o);
        let noise = NoiseModel {
            track_dropout_prob: 0.25,
            ..NoiseModel::noiseless(11)
        };
        let got: Vec<_> = Matcher::new(noise).track(&all, &o).ids().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let expected: Vec<LandmarkId> = (0..20).filter(|_| rng.random::<f64>() >= 0.25).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn std_ratio_examples() {
        let same = MatchSet::from_coords(&[(-3.0, -3.0), (1.0, 1.0), (8.0, 8.0)]);
        assert_eq!(same.std_ratio().unwrap(), 1.0);
        let half = MatchSet::from_coords(&[(-20.0, -40.0), (20.0, 40.0)]);
        assert_eq!(half.std_ratio().unwrap(), 0.5);
    }

    #[test]
    fn std_ratio_degenerate_cases() {
        let single = MatchSet::from_coords(&[(1.0, 2.0)]);
        assert!(matches!(
            single.std_ratio(),
            Err(NavError::DegenerateSpread { .. })
        ));
        let flat = MatchSet::from_coords(&[(1.0, 5.0), (2.0, 5.0)]);
        assert!(matches!(
            flat.std_ratio(),
            Err(NavError::DegenerateSpread { .. })
        ));
    }

    #[test]
    fn median_distance_examples() {
        let same = MatchSet::from_coords(&[(4.0, 4.0), (-1.0, -1.0)]);
        assert_eq!(same.median_distance().unwrap(), 0.0);
        let m = MatchSet::from_coords(&[(0.0, 4.0), (10.0, 20.0)]);
        assert_eq!(m.median_distance().unwrap(), 7.0);
        assert_eq!(
            MatchSet::default().median_distance(),
            Err(NavError::EmptyMatch)
        );
    }

    #[test]
    fn mse_examples() {
        let same = MatchSet::from_coords(&[(4.0, 4.0), (-1.0, -1.0)]);
        assert_eq!(same.mse().unwrap(), 0.0);
        let m = MatchSet::from_coords(&[(0.0, 2.0), (2.0, 0.0)]);
        assert_eq!(m.mse().unwrap(), 4.0);
        assert_eq!(MatchSet::default().mse(), Err(NavError::EmptyMatch));
    }

    #[test]
    fn split_sides_examples() {
        let all_right = MatchSet::from_coords(&[(1.0, 3.0), (2.0, 9.0)]);
        let (l, r) = all_right.split_sides();
        assert!(l.is_empty());
        assert_eq!(r.len(), 2);

        let both = MatchSet::from_coords(&[(0.0, -5.0), (0.0, 5.0)]);
        let (l, r) = both.split_sides();
        assert_eq!((l.len(), r.len()), (1, 1));

        let center = MatchSet::from_coords(&[(0.0, 0.0)]);
        let (l, r) = center.split_sides();
        assert_eq!((l.len(), r.len()), (0, 1));
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    fn sample_path() -> VisualPath {
        let kf = |index, x: f64, o: &[(LandmarkId, f64)]| Keyframe {
            index,
            pose_truth: Pose::new(x, 0.0, 0.0),
            observations: obs(o),
        };
        VisualPath::new(
            vec![
                kf(0, 0.0, &[(1, -10.0), (2, 20.0), (3, 0.1)]),
                kf(1, 1.0, &[(1, -20.0), (2, 40.0)]),
            ],
            vec![vec![
                SegmentFeature {
                    id: 1,
                    start: -10.0,
                    end: -20.0,
                },
                SegmentFeature {
                    id: 2,
                    start: 20.0,
                    end: 40.0,
                },
            ]],
        )
        .unwrap()
    }

    #[test]
    fn path_file_round_trips() {
        let path = sample_path();
        let back = VisualPath::from_json(&path.to_json()).unwrap();
        assert_eq!(back, path);
    }

    #[test]
    fn path_validation() {
        let p = sample_path();
        let mut kfs = p.keyframes().to_vec();
        assert!(VisualPath::new(kfs[..1].to_vec(), vec![]).is_err());
        kfs[1].observations = obs(&[(8, 1.0)]);
        assert!(VisualPath::new(kfs, vec![vec![]]).is_err());
        // corrupted segment store is rejected on load
        let json = p.to_json();
        let at = json.rfind("40.0").unwrap();
        let text = format!("{}41.0{}", &json[..at], &json[at + 4..]);
        assert!(VisualPath::from_json(&text).is_err());
    }

    #[test]
    fn destination_uses_segment_store() {
        let p = sample_path();
        assert_eq!(p.destination(0), obs(&[(1, -20.0), (2, 40.0)]));
        assert!(p.check_camera(&CameraModel::default()).is_ok());
    }
}
