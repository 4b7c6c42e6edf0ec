//! Discordance and separability measures and their label-free surrogates.
//!
//! With labels, alignment between the augmentation and the anomalies is
//! measured directly ([`alignment_loss`]) or decomposed into [`discordance`]
//! and [`separability`]. Without labels, [`l_dis_hat`] and [`l_sep_hat`]
//! stand in for them and [`l_val`] combines the two.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{DsvError, Result};
use crate::geometry::{check_dims, dot, euclid, mean_vector, population_std, set_distance, EmbeddingSet};

/// How the separability surrogate enters the validation loss.
///
/// `Max` is the printed form, `l_dis - max(l_sep, 1/2) / l_dis`. `Min` caps
/// the reward at the ideal value 1/2 instead, so overshooting the optimum is
/// not rewarded further.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SepClamp {
    #[default]
    Max,
    Min,
}

impl SepClamp {
    pub fn apply(self, l_sep: f64) -> f64 {
        match self {
            SepClamp::Max => l_sep.max(0.5),
            SepClamp::Min => l_sep.min(0.5),
        }
    }
}

impl fmt::Display for SepClamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SepClamp::Max => "max",
            SepClamp::Min => "min",
        })
    }
}

impl FromStr for SepClamp {
    type Err = DsvError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "max" => Ok(SepClamp::Max),
            "min" => Ok(SepClamp::Min),
            other => Err(DsvError::InvalidConfig(format!(
                "unknown separability clamp '{other}' (expected max or min)"
            ))),
        }
    }
}

/// Per-candidate loss values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_dis: f64,
    pub l_sep: f64,
    pub l_val: f64,
    /// `d(Z_aug, Z_test^a)`; only filled in when test labels are known.
    pub alignment: Option<f64>,
}

fn base_distance(trn: &EmbeddingSet, aug: &EmbeddingSet) -> Result<f64> {
    let d = set_distance(trn, aug)?;
    if d > 0.0 {
        Ok(d)
    } else {
        Err(DsvError::DegenerateBase)
    }
}

pub fn alignment_loss(aug: &EmbeddingSet, test_a: &EmbeddingSet) -> Result<f64> {
    set_distance(aug, test_a)
}

/// `(d(trn, test_a) + d(aug, test_a)) / d(trn, aug) - 1`. Zero when the
/// anomalies sit on the train-to-augmented segment; lower is better.
pub fn discordance(trn: &EmbeddingSet, aug: &EmbeddingSet, test_a: &EmbeddingSet) -> Result<f64> {
    let base = base_distance(trn, aug)?;
    let to_trn = set_distance(trn, test_a)?;
    let to_aug = set_distance(aug, test_a)?;
    Ok((to_trn + to_aug) / base - 1.0)
}

/// Mean projection of every anomaly onto every train-to-augmented direction,
/// in units of `d(trn, aug)`. One when anomalies project onto the augmented
/// points; higher is better.
pub fn separability(trn: &EmbeddingSet, aug: &EmbeddingSet, test_a: &EmbeddingSet) -> Result<f64> {
    let base = base_distance(trn, aug)?;
    check_dims(trn.dim(), test_a.dim())?;
    // The projection is linear in the anomaly, so summing over anomalies
    // reduces to projecting their mean and scaling by the count.
    let anomaly_mean = mean_vector(test_a);
    let dim = trn.dim();
    let per_trn: Vec<Result<f64>> = (0..trn.len())
        .into_par_iter()
        .map(|i| {
            let t = trn.row(i);
            let mut acc = 0.0;
            let mut dir = vec![0.0; dim];
            let mut off = vec![0.0; dim];
            for (k, o) in off.iter_mut().enumerate() {
                *o = anomaly_mean[k] - t[k];
            }
            for (j, a) in aug.rows().enumerate() {
                for k in 0..dim {
                    dir[k] = a[k] - t[k];
                }
                let norm = dot(&dir, &dir).sqrt();
                if norm == 0.0 {
                    return Err(DsvError::DegenerateDirection(format!(
                        "train vector {i} coincides with augmented vector {j}"
                    )));
                }
                acc += dot(&off, &dir) / norm;
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for r in per_trn {
        total += r?;
    }
    Ok(total / (base * trn.len() as f64 * aug.len() as f64))
}

/// `d(trn ∪ aug, test) / d(trn, aug)`, the union taken as a multiset.
pub fn l_dis_hat(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet) -> Result<f64> {
    let base = base_distance(trn, aug)?;
    l_dis_with_base(trn, aug, test, base)
}

fn l_dis_with_base(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet, base: f64) -> Result<f64> {
    let union = trn.concat(aug)?;
    Ok(set_distance(&union, test)? / base)
}

/// Spread of test projections onto the directions from the train mean to
/// each augmented point, in units of `d(trn, aug)`.
pub fn l_sep_hat(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet) -> Result<f64> {
    let base = base_distance(trn, aug)?;
    l_sep_with_base(trn, aug, test, base)
}

fn l_sep_with_base(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet, base: f64) -> Result<f64> {
    check_dims(trn.dim(), test.dim())?;
    let projections = anchor_projections(&mean_vector(trn), aug, test)?;
    Ok(population_std(&projections)? / base)
}

/// `proj(anchor, a, t)` for every augmented `a` and test `t`, aug-major.
pub(crate) fn anchor_projections(anchor: &[f64], aug: &EmbeddingSet, test: &EmbeddingSet) -> Result<Vec<f64>> {
    check_dims(anchor.len(), aug.dim())?;
    check_dims(anchor.len(), test.dim())?;
    let dim = anchor.len();
    let centred = test.map_rows(|src, dst| {
        for k in 0..dim {
            dst[k] = src[k] - anchor[k];
        }
    });
    let rows: Vec<Result<Vec<f64>>> = (0..aug.len())
        .into_par_iter()
        .map(|j| {
            let a = aug.row(j);
            let norm = euclid(a, anchor);
            if norm == 0.0 {
                return Err(DsvError::DegenerateDirection(format!(
                    "augmented vector {j} coincides with the train mean"
                )));
            }
            let dir: Vec<f64> = a.iter().zip(anchor).map(|(x, m)| x - m).collect();
            Ok(centred.rows().map(|c| dot(c, &dir) / norm).collect())
        })
        .collect();
    let mut out = Vec::with_capacity(aug.len() * test.len());
    for r in rows {
        out.extend(r?);
    }
    Ok(out)
}

/// The validation loss with the printed clamp.
pub fn l_val(trn: &EmbeddingSet, aug: &EmbeddingSet, test: &EmbeddingSet) -> Result<LossBreakdown> {
    l_val_with(trn, aug, test, SepClamp::Max)
}

pub fn l_val_with(
    trn: &EmbeddingSet,
    aug: &EmbeddingSet,
    test: &EmbeddingSet,
    clamp: SepClamp,
) -> Result<LossBreakdown> {
    let base = base_distance(trn, aug)?;
    let l_dis = l_dis_with_base(trn, aug, test, base)?;
    let l_sep = l_sep_with_base(trn, aug, test, base)?;
    Ok(LossBreakdown {
        l_dis,
        l_sep,
        l_val: combine(l_dis, l_sep, clamp),
        alignment: None,
    })
}

/// `l_dis - clamp(l_sep) / l_dis`.
pub fn combine(l_dis: f64, l_sep: f64, clamp: SepClamp) -> f64 {
    l_dis - clamp.apply(l_sep) / l_dis
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    fn brute_d(a: &EmbeddingSet, b: &EmbeddingSet) -> f64 {
        let mut s = 0.0;
        for x in a.rows() {
            for y in b.rows() {
                s += x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            }
        }
        s / (a.len() * b.len()) as f64
    }

    fn brute_proj(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut nb = 0.0;
        for k in 0..a.len() {
            num += (c[k] - a[k]) * (b[k] - a[k]);
            nb += (b[k] - a[k]) * (b[k] - a[k]);
        }
        num / nb.sqrt()
    }

    fn brute_separability(trn: &EmbeddingSet, aug: &EmbeddingSet, ta: &EmbeddingSet) -> f64 {
        let mut s = 0.0;
        for t in trn.rows() {
            for a in aug.rows() {
                for c in ta.rows() {
                    s += brute_proj(t, a, c);
                }
            }
        }
        s / (brute_d(trn, aug) * (trn.len() * aug.len() * ta.len()) as f64)
    }

    #[test]
    fn alignment_examples() {
        let a = set(&[&[1.0, 3.0]]);
        assert_eq!(alignment_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(alignment_loss(&set(&[&[2.0, 0.0]]), &set(&[&[1.0, 0.0]])).unwrap(), 1.0);
    }

    #[test]
    fn discordance_examples() {
        let trn = set(&[&[0.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0]]);
        assert_eq!(discordance(&trn, &aug, &set(&[&[1.0, 0.0]])).unwrap(), 0.0);
        let v = discordance(&trn, &aug, &set(&[&[1.0, 1.0]])).unwrap();
        assert!((v - (2f64.sqrt() - 1.0)).abs() < 1e-15);
        assert!(matches!(
            discordance(&trn, &trn, &aug),
            Err(DsvError::DegenerateBase)
        ));
    }

    #[test]
    fn separability_examples() {
        let trn = set(&[&[0.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0]]);
        assert_eq!(separability(&trn, &aug, &set(&[&[2.0, 0.0]])).unwrap(), 1.0);
        assert_eq!(separability(&trn, &aug, &set(&[&[1.0, 1.0]])).unwrap(), 0.5);
        assert_eq!(separability(&trn, &aug, &set(&[&[0.0, 5.0]])).unwrap(), 0.0);
    }

    #[test]
    fn separability_names_coincident_pair() {
        let trn = set(&[&[0.0, 0.0], &[2.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0], &[4.0, 0.0]]);
        match separability(&trn, &aug, &set(&[&[1.0, 0.0]])) {
            Err(DsvError::DegenerateDirection(msg)) => {
                assert!(msg.contains("train vector 1") && msg.contains("augmented vector 0"), "{msg}")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn l_dis_examples() {
        let trn = set(&[&[0.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0]]);
        assert_eq!(l_dis_hat(&trn, &aug, &set(&[&[1.0, 0.0]])).unwrap(), 0.5);
        assert_eq!(l_dis_hat(&trn, &aug, &set(&[&[0.0, 0.0], &[2.0, 0.0]])).unwrap(), 0.5);
        let mut last = 0.0;
        for m in [10.0, 100.0, 1e4, 1e6] {
            let v = l_dis_hat(&trn, &aug, &set(&[&[m, 0.0]])).unwrap();
            assert!(v > last);
            last = v;
        }
        assert!(last > 1e5);
    }

    #[test]
    fn l_sep_examples() {
        let trn = set(&[&[0.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0]]);
        assert_eq!(l_sep_hat(&trn, &aug, &set(&[&[0.0, 0.0], &[2.0, 0.0]])).unwrap(), 0.5);
        assert_eq!(l_sep_hat(&trn, &aug, &set(&[&[1.0, 3.0], &[1.0, 3.0]])).unwrap(), 0.0);
        assert!(matches!(
            l_sep_hat(&set(&[&[0.0, 0.0], &[2.0, 0.0]]), &set(&[&[1.0, 0.0]]), &trn),
            Err(DsvError::DegenerateDirection(_))
        ));
    }

    #[test]
    fn l_sep_matches_brute_force_multi_aug() {
        let trn = set(&[&[0.0, 0.0], &[1.0, 2.0], &[-1.0, 0.5]]);
        let aug = set(&[&[4.0, 1.0], &[3.0, -2.0]]);
        let test = set(&[&[0.5, 0.5], &[2.0, 1.0], &[3.5, -1.0], &[-2.0, 2.0]]);
        let mu = [0.0, 2.5 / 3.0];
        let mut projections = Vec::new();
        for a in aug.rows() {
            for t in test.rows() {
                projections.push(brute_proj(&mu, a, t));
            }
        }
        let n = projections.len() as f64;
        let m = projections.iter().sum::<f64>() / n;
        let sd = (projections.iter().map(|p| (p - m) * (p - m)).sum::<f64>() / n).sqrt();
        let expected = sd / brute_d(&trn, &aug);
        assert!(close(l_sep_hat(&trn, &aug, &test).unwrap(), expected, 1e-12));
    }

    #[test]
    fn l_val_examples() {
        assert_eq!(combine(1.0, 0.5, SepClamp::Max), 0.5);
        assert_eq!(combine(2.0, 0.2, SepClamp::Max), 1.75);
        assert_eq!(combine(2.0, 0.2, SepClamp::Min), 1.9);
        let trn = set(&[&[0.0, 0.0]]);
        let aug = set(&[&[2.0, 0.0]]);
        let test = set(&[&[0.0, 0.0], &[2.0, 0.0]]);
        for clamp in [SepClamp::Max, SepClamp::Min] {
            let b = l_val_with(&trn, &aug, &test, clamp).unwrap();
            assert_eq!((b.l_dis, b.l_sep, b.l_val), (0.5, 0.5, -0.5));
            assert_eq!(b.alignment, None);
        }
        assert_eq!(l_val(&trn, &aug, &test).unwrap().l_val, -0.5);
    }

    #[test]
    fn clamp_parses() {
        assert_eq!("max".parse::<SepClamp>().unwrap(), SepClamp::Max);
        assert_eq!("min".parse::<SepClamp>().unwrap(), SepClamp::Min);
        assert!("mid".parse::<SepClamp>().is_err());
        assert_eq!(SepClamp::default(), SepClamp::Max);
    }

    fn arb_rows(n: std::ops::RangeInclusive<usize>, dim: usize) -> impl Strategy<Value = EmbeddingSet> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, dim), n)
            .prop_map(|r| EmbeddingSet::from_rows(r).unwrap())
    }

    fn triple() -> impl Strategy<Value = (EmbeddingSet, EmbeddingSet, EmbeddingSet)> {
        (2usize..5).prop_flat_map(|d| {
            (
                arb_rows(1..=6, d),
                arb_rows(1..=6, d).prop_map(|s| s.map_rows(|x, y| {
                    // keep augmented points well away from the train cloud
                    for (o, v) in y.iter_mut().zip(x) {
                        *o = v + 20.0;
                    }
                })),
                arb_rows(1..=6, d),
            )
        })
    }

    fn shift(s: &EmbeddingSet, by: &[f64]) -> EmbeddingSet {
        s.map_rows(|x, y| {
            for k in 0..x.len() {
                y[k] = x[k] + by[k % by.len()];
            }
        })
    }

    fn scale(s: &EmbeddingSet, l: f64) -> EmbeddingSet {
        s.map_rows(|x, y| {
            for k in 0..x.len() {
                y[k] = x[k] * l;
            }
        })
    }

    proptest! {
        #[test]
        fn discordance_and_separability_match_oracles((trn, aug, ta) in triple()) {
            let hd = (brute_d(&trn, &ta) + brute_d(&aug, &ta)) / brute_d(&trn, &aug) - 1.0;
            prop_assert!(close(discordance(&trn, &aug, &ta).unwrap(), hd, 1e-10));
            prop_assert!(close(separability(&trn, &aug, &ta).unwrap(), brute_separability(&trn, &aug, &ta), 1e-10));
            prop_assert!(close(alignment_loss(&aug, &ta).unwrap(), brute_d(&aug, &ta), 1e-12));
        }

        #[test]
        fn singleton_reduction(t in prop::collection::vec(-5.0f64..5.0, 3),
                               a in prop::collection::vec(10.0f64..15.0, 3),
                               c in prop::collection::vec(-5.0f64..15.0, 3)) {
            let s = |v: &Vec<f64>| EmbeddingSet::from_rows(vec![v.clone()]).unwrap();
            let base = euclid(&t, &a);
            let hd = (euclid(&t, &c) + euclid(&a, &c)) / base - 1.0;
            let hs = brute_proj(&t, &a, &c) / base;
            prop_assert!(close(discordance(&s(&t), &s(&a), &s(&c)).unwrap(), hd, 1e-12));
            prop_assert!(close(separability(&s(&t), &s(&a), &s(&c)).unwrap(), hs, 1e-12));
        }

        #[test]
        fn translation_and_scale_invariance((trn, aug, test) in triple(),
                                            by in prop::collection::vec(-50.0f64..50.0, 1..4),
                                            lambda in 0.05f64..20.0) {
            let base = l_val(&trn, &aug, &test).unwrap();
            let hd = discordance(&trn, &aug, &test).unwrap();
            let hs = separability(&trn, &aug, &test).unwrap();

            let moved = l_val(&shift(&trn, &by), &shift(&aug, &by), &shift(&test, &by)).unwrap();
            prop_assert!(close(moved.l_dis, base.l_dis, 1e-8));
            prop_assert!(close(moved.l_sep, base.l_sep, 1e-8));
            prop_assert!(close(moved.l_val, base.l_val, 1e-8));
            prop_assert!(close(discordance(&shift(&trn, &by), &shift(&aug, &by), &shift(&test, &by)).unwrap(), hd, 1e-8));

            let scaled = l_val(&scale(&trn, lambda), &scale(&aug, lambda), &scale(&test, lambda)).unwrap();
            prop_assert!(close(scaled.l_dis, base.l_dis, 1e-9));
            prop_assert!(close(scaled.l_sep, base.l_sep, 1e-9));
            prop_assert!(close(scaled.l_val, base.l_val, 1e-9));
            prop_assert!(close(separability(&scale(&trn, lambda), &scale(&aug, lambda), &scale(&test, lambda)).unwrap(), hs, 1e-9));
        }

        #[test]
        fn clamp_monotonicity(l_dis in 0.5f64..10.0, s1 in 0.0f64..3.0, s2 in 0.0f64..3.0) {
            let (lo, hi) = if s1 <= s2 { (s1, s2) } else { (s2, s1) };
            let a = combine(l_dis, lo, SepClamp::Max);
            let b = combine(l_dis, hi, SepClamp::Max);
            prop_assert!(b <= a);
            if hi <= 0.5 {
                prop_assert_eq!(a, b);
            }
        }

        #[test]
        fn ideal_geometry(t in prop::collection::vec(-5.0f64..5.0, 2..6), off in prop::collection::vec(0.5f64..5.0, 6)) {
            let a: Vec<f64> = t.iter().zip(&off).map(|(x, o)| x + o).collect();
            let trn = EmbeddingSet::from_rows(vec![t.clone()]).unwrap();
            let aug = EmbeddingSet::from_rows(vec![a.clone()]).unwrap();
            let test = EmbeddingSet::from_rows(vec![t, a]).unwrap();
            prop_assert!(close(l_sep_hat(&trn, &aug, &test).unwrap(), 0.5, 1e-12));
        }
    }
}
