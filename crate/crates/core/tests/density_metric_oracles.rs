use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use otrepair::density::{build_support, kde_pmf, silverman_bandwidth, Bandwidth};
use otrepair::metrics::{conditional_fairness, symmetrized_kld, GaussianKde};
use otrepair::model::{validate_dataset, LabeledRecord, Role};

fn normal_sample(seed: u64, n: usize, mean: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| mean + rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Rule of thumb written out independently: type-7 quartiles and the
/// (n-1) standard deviation.
fn rule_of_thumb(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let q = |p: f64| {
        let pos = p * (n - 1.0);
        let (i, frac) = (pos.floor() as usize, pos - pos.floor());
        if i + 1 < v.len() {
            v[i] + frac * (v[i + 1] - v[i])
        } else {
            v[i]
        }
    };
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    0.9 * sd.min((q(0.75) - q(0.25)) / 1.34) * n.powf(-0.2)
}

#[test]
fn silverman_on_standard_normal() {
    let x = normal_sample(1, 1000, 0.0);
    let h = silverman_bandwidth(&x).unwrap().value();
    assert!(h > 0.1 && h < 0.4, "h = {h}");
    assert!((h - rule_of_thumb(&x)).abs() < 1e-12);
}

#[test]
fn kde_pmf_mean_tracks_sample_mean() {
    let x = normal_sample(2, 500, 0.0);
    let support = Arc::new(build_support(&x, 50).unwrap());
    let h = silverman_bandwidth(&x).unwrap();
    let p = kde_pmf(&x, &support, h).unwrap();
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    assert!((p.mean() - mean).abs() <= 3.0 * sd / n.sqrt());
}

/// Sup distance between the pmf CDF and the KDE CDF restricted to the grid
/// range, the latter by fine trapezoidal integration of the density.
fn cdf_gap(x: &[f64], n_q: usize) -> f64 {
    let support = Arc::new(build_support(x, n_q).unwrap());
    let h = silverman_bandwidth(x).unwrap();
    let cdf = kde_pmf(x, &support, h).unwrap().cdf();
    let kde = GaussianKde::new(x, h.value());
    let (lo, hi) = (support.lo(), support.hi());
    let fine = 20_000;
    let step = (hi - lo) / fine as f64;
    let dens: Vec<f64> = (0..=fine).map(|i| kde.density(lo + i as f64 * step)).collect();
    let mut acc = vec![0.0; fine + 1];
    for i in 1..=fine {
        acc[i] = acc[i - 1] + 0.5 * step * (dens[i - 1] + dens[i]);
    }
    let total = acc[fine];
    let spacing = support.spacing();
    support
        .states()
        .iter()
        .zip(&cdf)
        .map(|(&z, &c)| {
            // The pmf CDF at a state covers the cell up to its midpoint.
            let at = ((z + 0.5 * spacing - lo) / step).round().clamp(0.0, fine as f64) as usize;
            (c - acc[at] / total).abs()
        })
        .fold(0.0, f64::max)
}

#[test]
fn kde_pmf_cdf_converges_with_resolution() {
    let x = normal_sample(3, 400, 0.0);
    let gaps: Vec<f64> = [10, 100, 1000].iter().map(|&n| cdf_gap(&x, n)).collect();
    assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    assert!(gaps[2] < 5e-3, "{gaps:?}");
}

/// Symmetrized KL between two KDEs by trapezoid on a dense grid, with the
/// kernel sums taken over every sample point.
fn dense_oracle(a: &[f64], b: &[f64], n: usize) -> f64 {
    let (ha, hb) = (rule_of_thumb(a), rule_of_thumb(b));
    let density = |v: &[f64], h: f64, x: f64| {
        v.iter().map(|y| (-(x - y) * (x - y) / (2.0 * h * h)).exp()).sum::<f64>()
            / (v.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt())
    };
    let min = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let max = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 3.0 * ha.max(hb);
    let (lo, hi) = (min - pad, max + pad);
    let step = (hi - lo) / (n - 1) as f64;
    let integrand: Vec<f64> = (0..n)
        .map(|i| {
            let x = lo + i as f64 * step;
            let (f, g) = (density(a, ha, x).max(1e-12), density(b, hb, x).max(1e-12));
            0.5 * (f - g) * (f.ln() - g.ln())
        })
        .collect();
    step * (integrand.iter().sum::<f64>() - 0.5 * (integrand[0] + integrand[n - 1]))
}

#[test]
fn symmetrized_kld_matches_dense_quadrature() {
    let a = normal_sample(4, 5000, -1.0);
    let b = normal_sample(5, 5000, 0.0);
    let estimate = symmetrized_kld(&a, &b, 1024, 1e-12).unwrap();
    let oracle = dense_oracle(&a, &b, 10_240);
    assert!((estimate - oracle).abs() <= 0.02 * oracle, "{estimate} vs {oracle}");
    // Unit-variance normals one apart: 0.5 analytically, a little less after smoothing.
    assert!(estimate > 0.4 && estimate < 0.55, "{estimate}");
}

#[test]
fn symmetrized_kld_is_stable_in_grid_size() {
    let a = normal_sample(6, 2000, -1.0);
    let b = normal_sample(7, 2000, 0.0);
    let coarse = symmetrized_kld(&a, &b, 512, 1e-12).unwrap();
    let fine = symmetrized_kld(&a, &b, 1024, 1e-12).unwrap();
    assert!((coarse - fine).abs() < 0.01 * fine);
}

#[test]
fn fairness_weights_groups_by_frequency() {
    // Group u=0 holds 3/4 of the records and is unfair; u=1 is fair.
    let a = normal_sample(8, 600, -1.0);
    let b = normal_sample(9, 600, 0.0);
    let c = normal_sample(10, 200, 0.0);
    let mut records = Vec::new();
    records.extend(a.iter().map(|&x| LabeledRecord::new(vec![x], 0, 0)));
    records.extend(b.iter().map(|&x| LabeledRecord::new(vec![x], 1, 0)));
    records.extend(c.iter().map(|&x| LabeledRecord::new(vec![x], 0, 1)));
    records.extend(c.iter().map(|&x| LabeledRecord::new(vec![x], 1, 1)));
    let data = validate_dataset(records, 1, Role::Research).unwrap();
    let report = conditional_fairness(&data, 1024, 1e-12).unwrap();
    let e0 = symmetrized_kld(&a, &b, 1024, 1e-12).unwrap();
    assert_eq!(report.per_group[1][0], Some(0.0));
    assert!((report.group_weights[0] - 0.75).abs() < 1e-15);
    assert!((report.per_feature[0] - 0.75 * e0).abs() < 1e-12);
    assert_eq!(report.total, report.per_feature[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metric_axioms(
        a in prop::collection::vec(-5.0f64..5.0, 3..60),
        b in prop::collection::vec(-5.0f64..5.0, 3..60),
    ) {
        let (Ok(ab), Ok(ba)) = (symmetrized_kld(&a, &b, 256, 1e-12), symmetrized_kld(&b, &a, 256, 1e-12)) else {
            return Ok(());
        };
        prop_assert!(ab >= 0.0);
        prop_assert_eq!(ab, ba);
        prop_assert!(symmetrized_kld(&a, &a, 256, 1e-12).unwrap().abs() < 1e-9);
    }

    #[test]
    fn kde_pmf_is_normalized(
        x in prop::collection::vec(-100.0f64..100.0, 1..40),
        n_q in 2usize..120,
        h in 1e-4f64..50.0,
    ) {
        let Ok(support) = build_support(&x, n_q) else { return Ok(()); };
        let p = kde_pmf(&x, &Arc::new(support), Bandwidth::new(h).unwrap()).unwrap();
        prop_assert!((p.mass().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        prop_assert!(p.mass().iter().all(|m| m.is_finite() && *m >= 0.0));
    }
}
