//! Macro-actions, the distance between them, and the finite prototype library
//! that tree search draws its candidates from.

pub mod kmedoids;

use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::world::StateVec;

use self::kmedoids::{pam_restarts, DistanceMatrix};

/// A single low-level control command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PrimitiveAction<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> PrimitiveAction<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::new(vec![T::zero(); dim])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// A fixed-length chunk of `horizon` primitive actions, each of dimension `dim`.
///
/// Stored flattened in row-major (time-major) order.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroAction<T> {
    horizon: usize,
    dim: usize,
    flat: Vec<T>,
}

impl<T: Scalar> MacroAction<T> {
    pub fn from_rows(rows: Vec<PrimitiveAction<T>>) -> Result<Self> {
        let horizon = rows.len();
        if horizon == 0 {
            return Err(Error::Contract("macro-action needs at least one row".into()));
        }
        let dim = rows[0].dim();
        if dim == 0 || rows.iter().any(|r| r.dim() != dim) {
            return Err(Error::Contract(
                "macro-action rows must share one non-zero dimension".into(),
            ));
        }
        let flat = rows.into_iter().flat_map(|r| r.values).collect();
        Ok(Self { horizon, dim, flat })
    }

    pub fn from_flat(horizon: usize, dim: usize, flat: Vec<T>) -> Result<Self> {
        if horizon == 0 || dim == 0 || flat.len() != horizon * dim {
            return Err(Error::Contract(format!(
                "flat buffer of length {} does not match {}x{}",
                flat.len(),
                horizon,
                dim
            )));
        }
        Ok(Self { horizon, dim, flat })
    }

    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self {
            horizon,
            dim,
            flat: vec![T::zero(); horizon * dim],
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn flat(&self) -> &[T] {
        &self.flat
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.flat[t * self.dim..(t + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.flat.chunks_exact(self.dim)
    }

    pub fn primitive(&self, t: usize) -> PrimitiveAction<T> {
        PrimitiveAction::new(self.row(t).to_vec())
    }

    pub fn to_nested(&self) -> Vec<Vec<T>> {
        self.rows().map(<[T]>::to_vec).collect()
    }

    pub fn from_nested(rows: Vec<Vec<T>>) -> Result<Self> {
        Self::from_rows(rows.into_iter().map(PrimitiveAction::new).collect())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.horizon == other.horizon && self.dim == other.dim
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "macro-action shapes differ: {}x{} vs {}x{}",
                self.horizon, self.dim, other.horizon, other.dim
            )))
        }
    }
}

impl<T: Scalar> Serialize for MacroAction<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl<'de, T: Scalar> Deserialize<'de> for MacroAction<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<T>>::deserialize(d)?;
        Self::from_nested(rows).map_err(serde::de::Error::custom)
    }
}

/// Euclidean distance between flattened macro-actions in raw action units.
pub fn rho<T: Scalar>(u1: &MacroAction<T>, u2: &MacroAction<T>) -> Result<T> {
    u1.check_shape(u2)?;
    Ok(sq_dist(u1.flat(), u2.flat()).sqrt())
}

fn sq_dist<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Coordinates in which macro-action distances are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Per-dimension standardized using the library statistics.
    #[default]
    Normalized,
    Raw,
}

/// Standard deviations below this are replaced by one.
pub const MIN_STD: f64 = 1e-12;

/// Per action-dimension standardization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Normalization<T> {
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![T::zero(); dim],
            std: vec![T::one(); dim],
        }
    }

    /// Population mean and standard deviation over every primitive row of `macros`.
    pub fn fit(macros: &[MacroAction<T>]) -> Result<Self> {
        let first = macros
            .first()
            .ok_or_else(|| Error::Config("cannot fit normalization on no data".into()))?;
        let dim = first.dim();
        let mut count = 0usize;
        let mut mean = vec![T::zero(); dim];
        for u in macros {
            first.check_shape(u)?;
            for row in u.rows() {
                count += 1;
                for (m, &x) in mean.iter_mut().zip(row) {
                    *m = *m + x;
                }
            }
        }
        let n = T::from_usize(count).unwrap();
        mean.iter_mut().for_each(|m| *m = *m / n);
        let mut var = vec![T::zero(); dim];
        for u in macros {
            for row in u.rows() {
                for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                    *v = *v + (x - m) * (x - m);
                }
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < T::lit(MIN_STD) {
                    T::one()
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, u: &MacroAction<T>) -> Result<()> {
        if u.dim() != self.dim() {
            return Err(Error::Contract(format!(
                "action dimension {} does not match normalization dimension {}",
                u.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    pub fn normalize(&self, u: &MacroAction<T>) -> Result<MacroAction<T>> {
        self.check(u)?;
        let d = self.dim();
        let flat = u
            .flat()
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - self.mean[i % d]) / self.std[i % d])
            .collect();
        MacroAction::from_flat(u.horizon(), d, flat)
    }

    pub fn denormalize(&self, u: &MacroAction<T>) -> Result<MacroAction<T>> {
        self.check(u)?;
        let d = self.dim();
        let flat = u
            .flat()
            .iter()
            .enumerate()
            .map(|(i, &x)| x * self.std[i % d] + self.mean[i % d])
            .collect();
        MacroAction::from_flat(u.horizon(), d, flat)
    }

    /// Distance between two macro-actions in standardized coordinates.
    pub fn rho(&self, u1: &MacroAction<T>, u2: &MacroAction<T>) -> Result<T> {
        u1.check_shape(u2)?;
        self.check(u1)?;
        let d = self.dim();
        let s: T = u1
            .flat()
            .iter()
            .zip(u2.flat())
            .enumerate()
            .map(|(i, (&a, &b))| {
                let z = (a - b) / self.std[i % d];
                z * z
            })
            .sum();
        Ok(s.sqrt())
    }
}

/// Demonstration trajectory: visited states paired with the action taken there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<T> {
    pub task_id: String,
    pub steps: Vec<(StateVec<T>, PrimitiveAction<T>)>,
    pub success: bool,
}

/// Chops every successful trajectory into consecutive non-overlapping chunks of
/// `horizon` actions. Trailing remainders shorter than `horizon` are dropped.
pub fn segment_trajectories<T: Scalar>(
    trajectories: &[Trajectory<T>],
    horizon: usize,
) -> Result<Vec<MacroAction<T>>> {
    if horizon == 0 {
        return Err(Error::Config("macro horizon must be at least 1".into()));
    }
    let mut out = Vec::new();
    for traj in trajectories.iter().filter(|t| t.success) {
        for chunk in traj.steps.chunks_exact(horizon) {
            let rows = chunk.iter().map(|(_, a)| a.clone()).collect();
            out.push(MacroAction::from_rows(rows)?);
        }
    }
    Ok(out)
}

/// Options for [`build_library_with`].
#[derive(Debug, Clone)]
pub struct BuildOptions {
    pub max_swaps: usize,
    /// Distinct macros beyond this count are subsampled (seeded) before clustering.
    pub max_points: usize,
    /// Seeded random PAM starts tried in addition to the BUILD start.
    pub restarts: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_swaps: 100,
            max_points: 2000,
            restarts: 8,
        }
    }
}

/// Finite set of prototype macro-actions plus the statistics used to compare them.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroLibrary<T> {
    prototypes: Vec<MacroAction<T>>,
    normalization: Normalization<T>,
    normalized: Vec<MacroAction<T>>,
}

impl<T: Scalar> MacroLibrary<T> {
    pub fn new(prototypes: Vec<MacroAction<T>>, normalization: Normalization<T>) -> Result<Self> {
        if prototypes.len() < 2 {
            return Err(Error::Config("a library needs at least two prototypes".into()));
        }
        let first = &prototypes[0];
        if prototypes.iter().any(|u| !first.same_shape(u)) {
            return Err(Error::Contract("library prototypes differ in shape".into()));
        }
        if normalization.std.len() != first.dim() || normalization.mean.len() != first.dim() {
            return Err(Error::Contract("normalization dimension mismatch".into()));
        }
        if normalization.std.iter().any(|&s| !(s > T::zero())) {
            return Err(Error::Config("normalization std must be strictly positive".into()));
        }
        let normalized = prototypes
            .iter()
            .map(|u| normalization.normalize(u))
            .collect::<Result<Vec<_>>>()?;
        let mut seen = HashSet::new();
        for u in &normalized {
            if !seen.insert(bits(u.flat())) {
                return Err(Error::Config("library prototypes must be distinct".into()));
            }
        }
        Ok(Self {
            prototypes,
            normalization,
            normalized,
        })
    }

    pub fn len(&self) -> usize {
        self.prototypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototypes.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.prototypes[0].horizon()
    }

    pub fn action_dim(&self) -> usize {
        self.prototypes[0].dim()
    }

    pub fn prototypes(&self) -> &[MacroAction<T>] {
        &self.prototypes
    }

    pub fn prototype(&self, i: usize) -> &MacroAction<T> {
        &self.prototypes[i]
    }

    pub fn normalization(&self) -> &Normalization<T> {
        &self.normalization
    }

    pub fn check_compatible(&self, u: &MacroAction<T>) -> Result<()> {
        self.prototypes[0].check_shape(u)
    }

    /// Distance from prototype `i` to an arbitrary macro-action.
    pub fn distance_to(&self, i: usize, u: &MacroAction<T>, metric: Metric) -> Result<T> {
        match metric {
            Metric::Normalized => self.normalization.rho(&self.prototypes[i], u),
            Metric::Raw => rho(&self.prototypes[i], u),
        }
    }

    /// Distances from every prototype to `u`, in library order.
    pub fn distances_to(&self, u: &MacroAction<T>, metric: Metric) -> Result<Vec<T>> {
        self.check_compatible(u)?;
        match metric {
            Metric::Normalized => {
                let z = self.normalization.normalize(u)?;
                Ok(self
                    .normalized
                    .iter()
                    .map(|p| sq_dist(p.flat(), z.flat()).sqrt())
                    .collect())
            }
            Metric::Raw => Ok(self
                .prototypes
                .iter()
                .map(|p| sq_dist(p.flat(), u.flat()).sqrt())
                .collect()),
        }
    }

    /// Index of the prototype closest to `u` (lowest index on ties).
    pub fn nearest(&self, u: &MacroAction<T>, metric: Metric) -> Result<usize> {
        let d = self.distances_to(u, metric)?;
        Ok(argmin(&d))
    }

    pub fn to_file(&self) -> LibraryFile<T> {
        LibraryFile {
            version: LIBRARY_FORMAT_VERSION,
            horizon: self.horizon(),
            action_dim: self.action_dim(),
            size: self.len(),
            per_dim_mean: self.normalization.mean.clone(),
            per_dim_std: self.normalization.std.clone(),
            prototypes: self.prototypes.iter().map(MacroAction::to_nested).collect(),
        }
    }

    pub fn from_file(file: LibraryFile<T>) -> Result<Self> {
        if file.version != LIBRARY_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "unsupported library version {} (expected {})",
                file.version, LIBRARY_FORMAT_VERSION
            )));
        }
        let prototypes = file
            .prototypes
            .into_iter()
            .map(MacroAction::from_nested)
            .collect::<Result<Vec<_>>>()?;
        if prototypes.len() != file.size {
            return Err(Error::Format("library size field disagrees with prototypes".into()));
        }
        if prototypes
            .iter()
            .any(|u| u.horizon() != file.horizon || u.dim() != file.action_dim)
        {
            return Err(Error::Format("prototype shape disagrees with H/n fields".into()));
        }
        Self::new(
            prototypes,
            Normalization {
                mean: file.per_dim_mean,
                std: file.per_dim_std,
            },
        )
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.to_file())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

pub const LIBRARY_FORMAT_VERSION: u32 = 1;

/// On-disk JSON layout of a [`MacroLibrary`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryFile<T> {
    pub version: u32,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "n")]
    pub action_dim: usize,
    #[serde(rename = "m")]
    pub size: usize,
    pub per_dim_mean: Vec<T>,
    pub per_dim_std: Vec<T>,
    pub prototypes: Vec<Vec<Vec<T>>>,
}

/// Builds an `m`-prototype library with default [`BuildOptions`].
pub fn build_library<T: Scalar>(
    macros: &[MacroAction<T>],
    m: usize,
    seed: u64,
) -> Result<MacroLibrary<T>> {
    build_library_with(macros, m, seed, &BuildOptions::default())
}

/// Clusters `macros` with PAM in standardized coordinates and keeps the medoids.
///
/// Exact duplicates are merged before clustering. When more than
/// `opts.max_points` distinct macros remain, a seeded subsample is clustered.
/// The seed also drives the random PAM restarts.
pub fn build_library_with<T: Scalar>(
    macros: &[MacroAction<T>],
    m: usize,
    seed: u64,
    opts: &BuildOptions,
) -> Result<MacroLibrary<T>> {
    if m < 2 {
        return Err(Error::Config(format!("library size must be at least 2, got {m}")));
    }
    if macros.len() < m {
        return Err(Error::Config(format!(
            "requested {m} prototypes from only {} macro-actions",
            macros.len()
        )));
    }
    let normalization = Normalization::fit(macros)?;
    let normalized = macros
        .iter()
        .map(|u| normalization.normalize(u))
        .collect::<Result<Vec<_>>>()?;

    let mut seen = HashSet::new();
    let mut distinct: Vec<usize> = (0..macros.len())
        .filter(|&i| seen.insert(bits(normalized[i].flat())))
        .collect();
    if distinct.len() == 1 {
        return Err(Error::DegenerateLibrary(
            "every input macro-action is identical".into(),
        ));
    }
    if distinct.len() < m {
        return Err(Error::Config(format!(
            "requested {m} prototypes but only {} distinct macro-actions exist",
            distinct.len()
        )));
    }
    if distinct.len() > opts.max_points.max(m) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        distinct.shuffle(&mut rng);
        distinct.truncate(opts.max_points.max(m));
        distinct.sort_unstable();
    }

    let dist = DistanceMatrix::from_fn(distinct.len(), |a, b| {
        sq_dist(normalized[distinct[a]].flat(), normalized[distinct[b]].flat()).sqrt()
    });
    let result = pam_restarts(&dist, m, opts.max_swaps, opts.restarts, seed);
    let prototypes = result
        .medoids
        .iter()
        .map(|&i| macros[distinct[i]].clone())
        .collect();
    MacroLibrary::new(prototypes, normalization)
}

fn bits<T: Scalar>(xs: &[T]) -> Vec<u64> {
    // -0.0 and 0.0 compare equal, so fold them together.
    xs.iter()
        .map(|&x| {
            let v = x.as_f64();
            if v == 0.0 {
                0
            } else {
                v.to_bits()
            }
        })
        .collect()
}

pub(crate) fn argmin<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x < xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m1(x: f64) -> MacroAction<f64> {
        MacroAction::from_flat(1, 1, vec![x]).unwrap()
    }

    fn traj(len: usize, success: bool) -> Trajectory<f64> {
        let steps = (0..len)
            .map(|i| {
                (
                    StateVec::new(vec![i as f64]),
                    PrimitiveAction::new(vec![i as f64, 0.0]),
                )
            })
            .collect();
        Trajectory {
            task_id: "t".into(),
            steps,
            success,
        }
    }

    #[test]
    fn rho_identity_and_pythagoras() {
        let u1 = MacroAction::from_nested(vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let u2 = MacroAction::from_nested(vec![vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        assert_eq!(rho(&u1, &u1).unwrap(), 0.0);
        assert_eq!(rho(&u1, &u2).unwrap(), 5.0);
        let id = Normalization::identity(2);
        assert_eq!(id.rho(&u1, &u2).unwrap(), 5.0);
    }

    #[test]
    fn rho_rejects_shape_mismatch() {
        let u1 = MacroAction::<f64>::zeros(2, 2);
        let u2 = MacroAction::<f64>::zeros(3, 2);
        assert!(matches!(rho(&u1, &u2), Err(Error::Contract(_))));
    }

    #[test]
    fn rho_works_in_single_precision() {
        let u1 = MacroAction::<f32>::from_flat(1, 2, vec![0.0, 0.0]).unwrap();
        let u2 = MacroAction::<f32>::from_flat(1, 2, vec![3.0, 4.0]).unwrap();
        assert_eq!(rho(&u1, &u2).unwrap(), 5.0f32);
    }

    #[test]
    fn segmentation_counts() {
        let one = segment_trajectories(&[traj(9, true)], 4).unwrap();
        assert_eq!(one.len(), 2);
        assert_eq!(one[1].row(0), &[4.0, 0.0]);
        assert!(segment_trajectories(&[traj(9, false), traj(12, false)], 4)
            .unwrap()
            .is_empty());
        let many: Vec<_> = (0..50).map(|_| traj(100, true)).collect();
        assert_eq!(segment_trajectories(&many, 4).unwrap().len(), 1250);
        assert!(segment_trajectories::<f64>(&[], 4).unwrap().is_empty());
        assert!(segment_trajectories(&many, 0).is_err());
    }

    #[test]
    fn degenerate_std_is_clamped() {
        let macros: Vec<_> = (0..5)
            .map(|i| MacroAction::from_flat(1, 2, vec![i as f64, 1.0]).unwrap())
            .collect();
        let n = Normalization::fit(&macros).unwrap();
        assert_eq!(n.std[1], 1.0);
        assert!((n.std[0] - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn saturated_library_equals_input() {
        let macros: Vec<_> = [0.0, 3.0, 7.0, 8.0].iter().map(|&x| m1(x)).collect();
        let lib = build_library(&macros, 4, 0).unwrap();
        let mut got: Vec<f64> = lib.prototypes().iter().map(|u| u.flat()[0]).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![0.0, 3.0, 7.0, 8.0]);
    }

    #[test]
    fn build_errors() {
        let macros: Vec<_> = [0.0, 1.0].iter().map(|&x| m1(x)).collect();
        assert!(matches!(build_library(&macros, 3, 0), Err(Error::Config(_))));
        assert!(matches!(build_library(&macros, 1, 0), Err(Error::Config(_))));
        let same = vec![m1(2.0); 6];
        assert!(matches!(
            build_library(&same, 2, 0),
            Err(Error::DegenerateLibrary(_))
        ));
        let dupes = vec![m1(2.0), m1(2.0), m1(2.0), m1(5.0)];
        assert!(matches!(build_library(&dupes, 3, 0), Err(Error::Config(_))));
    }

    #[test]
    fn medoids_are_input_members_and_deterministic() {
        let macros: Vec<_> = (0..60)
            .map(|i| {
                let x = (i * 7 % 13) as f64;
                MacroAction::from_flat(2, 1, vec![x, (i % 5) as f64]).unwrap()
            })
            .collect();
        let a = build_library(&macros, 6, 9).unwrap();
        let b = build_library(&macros, 6, 9).unwrap();
        assert_eq!(a, b);
        for p in a.prototypes() {
            assert!(macros.contains(p));
        }
    }

    #[test]
    fn library_json_round_trip() {
        let macros: Vec<_> = (0..10)
            .map(|i| MacroAction::from_flat(2, 2, vec![i as f64, 0.5, -(i as f64), 1.0]).unwrap())
            .collect();
        let lib = build_library(&macros, 3, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lib.json");
        lib.save(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["version", "H", "n", "m", "per_dim_mean", "per_dim_std", "prototypes"] {
            assert!(v.get(key).is_some(), "missing key {key}");
        }
        assert_eq!(MacroLibrary::<f64>::load(&path).unwrap(), lib);
    }

    #[test]
    fn library_rejects_duplicates() {
        let n = Normalization::identity(1);
        assert!(MacroLibrary::new(vec![m1(1.0), m1(1.0)], n).is_err());
    }

    fn arb_macro() -> impl Strategy<Value = MacroAction<f64>> {
        prop::collection::vec(-5.0..5.0f64, 6)
            .prop_map(|v| MacroAction::from_flat(3, 2, v).unwrap())
    }

    proptest! {
        #[test]
        fn rho_is_a_metric(a in arb_macro(), b in arb_macro(), c in arb_macro(),
                           s0 in 0.1..4.0f64, s1 in 0.1..4.0f64) {
            let norm = Normalization { mean: vec![0.3, -1.0], std: vec![s0, s1] };
            let ab = norm.rho(&a, &b).unwrap();
            let ba = norm.rho(&b, &a).unwrap();
            let bc = norm.rho(&b, &c).unwrap();
            let ac = norm.rho(&a, &c).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(norm.rho(&a, &a).unwrap(), 0.0);
            prop_assert_eq!(ab, ba);
            prop_assert!(ac <= ab + bc + 1e-12);
            if a != b { prop_assert!(ab > 0.0); }
        }

        #[test]
        fn normalization_round_trips(u in arb_macro(), m0 in -3.0..3.0f64, s0 in 0.1..4.0f64) {
            let norm = Normalization { mean: vec![m0, 2.0], std: vec![s0, 0.5] };
            let back = norm.denormalize(&norm.normalize(&u).unwrap()).unwrap();
            for (x, y) in back.flat().iter().zip(u.flat()) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }
}
