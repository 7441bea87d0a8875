//! Deterministic binary masks.
//!
//! A mask is never stored: a [`MaskSpec`] (pattern, shape, seed) regenerates
//! the same 0/1 matrix every time. Conventions used throughout the crate:
//! density ρ is the fraction of ones, sparsity σ = 1 − ρ, and the fraction of
//! a factor that must be stored under `d` independent masks is `1 − σ^d`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{derive_seed, Matrix, RngStream};

/// Axis along which N:M groups are laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Groups of `m` consecutive rows within one column.
    #[default]
    Rows,
    /// Groups of `m` consecutive columns within one row.
    Cols,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskPattern {
    /// Every entry independently 1 with probability `density`.
    Bernoulli { density: f64 },
    /// Exactly `n` ones in every aligned group of `m` entries along `axis`.
    NToM {
        n: usize,
        m: usize,
        #[serde(default)]
        axis: Axis,
    },
}

impl MaskPattern {
    pub fn bernoulli(density: f64) -> Self {
        MaskPattern::Bernoulli { density }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            MaskPattern::Bernoulli { density } => {
                if !(0.0..=1.0).contains(&density) {
                    return Err(Error::config(format!(
                        "Bernoulli density must lie in [0, 1], got {density}"
                    )));
                }
            }
            MaskPattern::NToM { n, m, .. } => {
                if n == 0 || m == 0 || n > m {
                    return Err(Error::config(format!(
                        "N:M pattern needs 1 <= n <= m, got {n}:{m}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Expected fraction of ones.
    pub fn density(&self) -> f64 {
        match *self {
            MaskPattern::Bernoulli { density } => density,
            MaskPattern::NToM { n, m, .. } => n as f64 / m as f64,
        }
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.density()
    }
}

/// Everything needed to regenerate one mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskSpec {
    pub pattern: MaskPattern,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
}

/// Materializes the mask described by `spec`.
pub fn generate(spec: &MaskSpec) -> Result<Matrix> {
    spec.pattern.validate()?;
    if spec.rows == 0 || spec.cols == 0 {
        return Err(Error::config("mask dimensions must be positive"));
    }
    let mut rng = RngStream::new(spec.seed);
    let mut mask = Matrix::zeros(spec.rows, spec.cols);
    match spec.pattern {
        MaskPattern::Bernoulli { density } => {
            for v in mask.as_mut_slice() {
                if rng.next_f64() < density {
                    *v = 1.0;
                }
            }
        }
        MaskPattern::NToM { n, m, axis } => {
            let (along, across) = match axis {
                Axis::Rows => (spec.rows, spec.cols),
                Axis::Cols => (spec.cols, spec.rows),
            };
            if along % m != 0 {
                return Err(Error::config(format!(
                    "N:M axis length {along} is not divisible by m = {m}"
                )));
            }
            let mut slots: Vec<usize> = (0..m).collect();
            for group in 0..along / m {
                for lane in 0..across {
                    for (i, s) in slots.iter_mut().enumerate() {
                        *s = i;
                    }
                    // partial Fisher–Yates: first n slots are the kept offsets
                    for i in 0..n {
                        let j = i + rng.below((m - i) as u64) as usize;
                        slots.swap(i, j);
                    }
                    for &offset in &slots[..n] {
                        let pos = group * m + offset;
                        let (r, c) = match axis {
                            Axis::Rows => (pos, lane),
                            Axis::Cols => (lane, pos),
                        };
                        mask.set(r, c, 1.0);
                    }
                }
            }
        }
    }
    Ok(mask)
}

/// Per-entry mean of masks drawn from `pattern`; stands in for resampled masks at evaluation.
pub fn expected_mask(pattern: &MaskPattern, rows: usize, cols: usize) -> Matrix {
    Matrix::filled(rows, cols, pattern.density())
}

/// Number of positions where at least one mask is nonzero.
pub fn union_count(masks: &[Matrix]) -> Result<usize> {
    let Some(first) = masks.first() else {
        return Ok(0);
    };
    if let Some(bad) = masks.iter().find(|m| m.shape() != first.shape()) {
        return Err(Error::Shape {
            op: "union_count",
            lhs: first.shape(),
            rhs: bad.shape(),
        });
    }
    let len = first.as_slice().len();
    Ok((0..len)
        .filter(|&i| masks.iter().any(|m| m.as_slice()[i] != 0.0))
        .count())
}

/// Fraction of positions kept by at least one mask (entries that must be stored).
pub fn union_stored_fraction(masks: &[Matrix]) -> Result<f64> {
    let Some(first) = masks.first() else {
        return Err(Error::config("union_stored_fraction needs at least one mask"));
    };
    let total = first.as_slice().len() as f64;
    Ok(union_count(masks)? as f64 / total)
}

/// Closed-form stored fraction `1 − σ^d` for `d` independent masks of sparsity σ.
pub fn expected_stored_fraction(sparsity: f64, d: usize) -> f64 {
    1.0 - sparsity.powi(d as i32)
}

/// Which of the three mask arms a layer uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    DiffMask,
    SameMask,
    Dropout,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [PolicyKind::DiffMask, PolicyKind::SameMask, PolicyKind::Dropout];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::DiffMask => "diff_mask",
            PolicyKind::SameMask => "same_mask",
            PolicyKind::Dropout => "dropout",
        }
    }
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "diff_mask" | "diff" => Ok(PolicyKind::DiffMask),
            "same_mask" | "same" => Ok(PolicyKind::SameMask),
            "dropout" => Ok(PolicyKind::Dropout),
            other => Err(Error::config(format!("unknown mask policy `{other}`"))),
        }
    }
}

/// How the `d` tied modules obtain their masks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskPolicy {
    /// Distinct static masks, one seed per module.
    DiffMask { seeds: Vec<u64> },
    /// One static mask shared by every module.
    SameMask { seed: u64 },
    /// Fresh masks every training step, derived from `(base_seed, step)`.
    Dropout { base_seed: u64 },
}

impl MaskPolicy {
    /// Builds a policy of the given kind from one scalar seed.
    ///
    /// DiffMask uses `base_seed + i` for module `i`.
    pub fn from_base(kind: PolicyKind, base_seed: u64, d: usize) -> Self {
        match kind {
            PolicyKind::DiffMask => MaskPolicy::DiffMask {
                seeds: (0..d as u64).map(|i| base_seed.wrapping_add(i)).collect(),
            },
            PolicyKind::SameMask => MaskPolicy::SameMask { seed: base_seed },
            PolicyKind::Dropout => MaskPolicy::Dropout { base_seed },
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            MaskPolicy::DiffMask { .. } => PolicyKind::DiffMask,
            MaskPolicy::SameMask { .. } => PolicyKind::SameMask,
            MaskPolicy::Dropout { .. } => PolicyKind::Dropout,
        }
    }

    /// True when the realized masks depend on the step index.
    pub fn is_step_dependent(&self) -> bool {
        matches!(self, MaskPolicy::Dropout { .. })
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if d == 0 {
            return Err(Error::config("number of tied modules d must be >= 1"));
        }
        if let MaskPolicy::DiffMask { seeds } = self {
            if seeds.len() < d {
                return Err(Error::config(format!(
                    "DiffMask needs {d} seeds, got {}",
                    seeds.len()
                )));
            }
            for (i, s) in seeds.iter().enumerate() {
                if seeds[..i].contains(s) {
                    return Err(Error::config(format!("DiffMask seed {s} is repeated")));
                }
            }
        }
        Ok(())
    }

    /// The mask seed of each module at `step`.
    pub fn module_seeds(&self, d: usize, step: u64) -> Result<Vec<u64>> {
        self.validate(d)?;
        Ok(match self {
            MaskPolicy::DiffMask { seeds } => seeds[..d].to_vec(),
            MaskPolicy::SameMask { seed } => vec![*seed; d],
            MaskPolicy::Dropout { base_seed } => {
                let step_seed = derive_seed(*base_seed, step);
                (0..d as u64).map(|i| step_seed.wrapping_add(i)).collect()
            }
        })
    }

    /// The same policy with every seed passed through [`derive_seed`] with `salt`.
    ///
    /// A layer uses salt 0 for the `B` masks and salt 1 for the `A` masks so the
    /// two factors never share a stream. Distinct seeds stay distinct.
    pub fn for_factor(&self, salt: u64) -> MaskPolicy {
        match self {
            MaskPolicy::DiffMask { seeds } => MaskPolicy::DiffMask {
                seeds: seeds.iter().map(|&s| derive_seed(s, salt)).collect(),
            },
            MaskPolicy::SameMask { seed } => MaskPolicy::SameMask {
                seed: derive_seed(*seed, salt),
            },
            MaskPolicy::Dropout { base_seed } => MaskPolicy::Dropout {
                base_seed: derive_seed(*base_seed, salt),
            },
        }
    }
}

/// Specs of the `d` masks a policy yields at `step` for a `rows × cols` tensor.
pub fn specs_for_policy(
    policy: &MaskPolicy,
    pattern: MaskPattern,
    d: usize,
    (rows, cols): (usize, usize),
    step: u64,
) -> Result<Vec<MaskSpec>> {
    Ok(policy
        .module_seeds(d, step)?
        .into_iter()
        .map(|seed| MaskSpec {
            pattern,
            rows,
            cols,
            seed,
        })
        .collect())
}

/// The `d` masks a policy yields at `step`.
pub fn masks_for_policy(
    policy: &MaskPolicy,
    pattern: MaskPattern,
    d: usize,
    shape: (usize, usize),
    step: u64,
) -> Result<Vec<Matrix>> {
    let specs = specs_for_policy(policy, pattern, d, shape, step)?;
    if let MaskPolicy::SameMask { .. } = policy {
        let mask = generate(&specs[0])?;
        return Ok(vec![mask; d]);
    }
    specs.iter().map(generate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(pattern: MaskPattern, rows: usize, cols: usize, seed: u64) -> MaskSpec {
        MaskSpec {
            pattern,
            rows,
            cols,
            seed,
        }
    }

    fn density_of(m: &Matrix) -> f64 {
        m.as_slice().iter().sum::<f64>() / m.as_slice().len() as f64
    }

    #[test]
    fn degenerate_densities() {
        let ones = generate(&spec(MaskPattern::bernoulli(1.0), 7, 5, 3)).unwrap();
        assert_eq!(ones, Matrix::ones(7, 5));
        let zeros = generate(&spec(MaskPattern::bernoulli(0.0), 7, 5, 3)).unwrap();
        assert_eq!(zeros, Matrix::zeros(7, 5));
    }

    #[test]
    fn two_four_rows() {
        let p = MaskPattern::NToM {
            n: 2,
            m: 4,
            axis: Axis::Rows,
        };
        let mask = generate(&spec(p, 8, 4, 9)).unwrap();
        for c in 0..4 {
            for g in 0..2 {
                let count: f64 = (0..4).map(|k| mask.get(g * 4 + k, c)).sum();
                assert_eq!(count, 2.0);
            }
        }
    }

    #[test]
    fn n_to_m_cols_and_divisibility() {
        let p = MaskPattern::NToM {
            n: 1,
            m: 3,
            axis: Axis::Cols,
        };
        let mask = generate(&spec(p, 2, 9, 1)).unwrap();
        for r in 0..2 {
            for g in 0..3 {
                let count: f64 = (0..3).map(|k| mask.get(r, g * 3 + k)).sum();
                assert_eq!(count, 1.0);
            }
        }
        assert!(matches!(generate(&spec(p, 2, 8, 1)), Err(Error::Config(_))));
        let bad = MaskPattern::NToM {
            n: 5,
            m: 4,
            axis: Axis::Rows,
        };
        assert!(generate(&spec(bad, 8, 8, 1)).is_err());
        assert!(generate(&spec(MaskPattern::bernoulli(1.5), 2, 2, 1)).is_err());
    }

    #[test]
    fn deterministic_generation() {
        let s = spec(MaskPattern::bernoulli(0.5), 32, 16, 77);
        assert_eq!(generate(&s).unwrap(), generate(&s).unwrap());
    }

    #[test]
    fn bernoulli_density_three_sigma_fixed_seeds() {
        // |ρ̂ − ρ| ≤ 3·sqrt(ρ(1−ρ)/N) holds per draw with probability 0.9973;
        // over 1000 fixed draws expect ~3 exceedances and none past 4.5 sigma
        let n = (768 * 64) as f64;
        let mut over = 0;
        for density in [0.1, 0.3, 0.5, 0.6, 0.9] {
            for seed in 0..200 {
                let m = generate(&spec(MaskPattern::bernoulli(density), 768, 64, seed)).unwrap();
                let sigma = (density * (1.0 - density) / n).sqrt();
                let dev = (density_of(&m) - density).abs();
                assert!(dev <= 4.5 * sigma, "ρ={density} seed={seed}");
                if dev > 3.0 * sigma {
                    over += 1;
                }
            }
        }
        assert!(over <= 10, "{over} of 1000 draws beyond 3 sigma");
    }

    #[test]
    fn union_fractions() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        let b = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(union_stored_fraction(&[a.clone(), b]).unwrap(), 1.0);
        assert_eq!(union_stored_fraction(&[a.clone()]).unwrap(), 0.5);
        assert!(union_stored_fraction(&[a, Matrix::ones(3, 2)]).is_err());
    }

    #[test]
    fn union_of_independent_masks_at_768() {
        for (d, expected) in [(2usize, 0.75), (4, 0.9375)] {
            let policy = MaskPolicy::from_base(PolicyKind::DiffMask, 100, d);
            let masks =
                masks_for_policy(&policy, MaskPattern::bernoulli(0.5), d, (768, 768), 0).unwrap();
            let frac = union_stored_fraction(&masks).unwrap();
            assert!((frac - expected).abs() < 0.01, "d={d}: {frac}");
        }
    }

    #[test]
    fn expected_fraction_closed_form() {
        assert_eq!(expected_stored_fraction(0.5, 2), 0.75);
        assert_eq!(expected_stored_fraction(0.5, 4), 0.9375);
        assert!((expected_stored_fraction(0.3, 1) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn policy_arms() {
        let p = MaskPattern::bernoulli(0.5);
        let same = masks_for_policy(&MaskPolicy::SameMask { seed: 4 }, p, 3, (16, 16), 0).unwrap();
        assert_eq!(same.len(), 3);
        assert!(same.iter().all(|m| *m == same[0]));

        let diff = MaskPolicy::from_base(PolicyKind::DiffMask, 4, 2);
        let masks = masks_for_policy(&diff, p, 2, (64, 64), 0).unwrap();
        assert_ne!(masks[0], masks[1]);
        assert_eq!(masks, masks_for_policy(&diff, p, 2, (64, 64), 123).unwrap());

        let drop = MaskPolicy::Dropout { base_seed: 4 };
        let s5 = masks_for_policy(&drop, p, 2, (32, 32), 5).unwrap();
        assert_eq!(s5, masks_for_policy(&drop, p, 2, (32, 32), 5).unwrap());
        assert_ne!(s5, masks_for_policy(&drop, p, 2, (32, 32), 6).unwrap());
    }

    #[test]
    fn diff_mask_seed_requirements() {
        let short = MaskPolicy::DiffMask { seeds: vec![1] };
        assert!(matches!(short.module_seeds(2, 0), Err(Error::Config(_))));
        let dup = MaskPolicy::DiffMask { seeds: vec![3, 3] };
        assert!(dup.module_seeds(2, 0).is_err());
        let salted = MaskPolicy::DiffMask { seeds: vec![1, 2] }.for_factor(1);
        assert!(salted.validate(2).is_ok());
    }

    #[test]
    fn spec_json_fragment() {
        let s = spec(
            MaskPattern::NToM {
                n: 2,
                m: 4,
                axis: Axis::Rows,
            },
            8,
            4,
            11,
        );
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"pattern":{"kind":"n_to_m","n":2,"m":4,"axis":"rows"},"rows":8,"cols":4,"seed":11}"#
        );
        assert_eq!(serde_json::from_str::<MaskSpec>(&json).unwrap(), s);
        assert!(serde_json::from_str::<MaskSpec>(
            r#"{"pattern":{"kind":"bernoulli","density":0.5},"rows":1,"cols":1,"seed":0,"extra":1}"#
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn bernoulli_density_never_far_off(density in 0.05f64..0.95, seed in any::<u64>()) {
            let m = generate(&spec(MaskPattern::bernoulli(density), 64, 64, seed)).unwrap();
            let n = 4096.0;
            let sigma = (density * (1.0 - density) / n).sqrt();
            prop_assert!((density_of(&m) - density).abs() <= 5.0 * sigma);
        }

        #[test]
        fn union_of_copies_is_own_density(seed in any::<u64>(), d in 1usize..5) {
            let m = generate(&spec(MaskPattern::bernoulli(0.4), 20, 30, seed)).unwrap();
            let copies = vec![m.clone(); d];
            prop_assert_eq!(union_stored_fraction(&copies).unwrap(), density_of(&m));
        }

        #[test]
        fn n_to_m_exact_group_counts(n in 1usize..4, extra in 0usize..4, groups in 1usize..4, seed in any::<u64>()) {
            let m = n + extra;
            let p = MaskPattern::NToM { n, m, axis: Axis::Rows };
            let mask = generate(&spec(p, groups * m, 5, seed)).unwrap();
            for c in 0..5 {
                for g in 0..groups {
                    let count: f64 = (0..m).map(|k| mask.get(g * m + k, c)).sum();
                    prop_assert_eq!(count, n as f64);
                }
            }
        }
    }
}
