use std::sync::Arc;

use homsync::biphoton::PhotonPairSource;
use homsync::fiber_model::{
    differential_drift_coefficient, dispersion_parameter, drift_segmented, drift_single, group_delay_coefficient,
    path_delay_difference, refractive_index, temperature_sensitivity_b, thermal_terms, DispersionModel, FiberLink,
};
use proptest::prelude::*;

const C: f64 = 299_792_458.0;

fn model() -> Arc<DispersionModel> {
    Arc::new(DispersionModel::bundled())
}

/// Group index and D from plain finite differences of n(λ).
fn oracle_ng_d(m: &DispersionModel, nm: f64, t: f64) -> (f64, f64) {
    let h = 0.05;
    let n = |x: f64| refractive_index(m, x, t).unwrap();
    let d1 = (n(nm + h) - n(nm - h)) / (2.0 * h);
    let d2 = (n(nm + h) - 2.0 * n(nm) + n(nm - h)) / (h * h);
    let ng = n(nm) - nm * d1;
    // D = −(λ/c)·d²n/dλ², in ps/(nm·km)
    let d = -(nm * 1e-9) / C * d2 * 1e18 * 1e6;
    (ng, d)
}

#[test]
fn coefficients_match_finite_difference_oracle() {
    let m = model();
    for nm in [1550.0, 1574.4, 1574.7] {
        let (ng, d) = oracle_ng_d(&m, nm, 22.0);
        let ng_model = group_delay_coefficient(&m, nm, 22.0).unwrap() * C;
        let d_model = dispersion_parameter(&m, nm, 22.0).unwrap();
        assert!((ng_model - ng).abs() < 1e-6, "{nm}: {ng_model} vs {ng}");
        assert!((d_model - d).abs() / d < 0.01, "{nm}: {d_model} vs {d}");
    }
}

#[test]
fn group_delay_term_matches_d_dlambda_l() {
    let m = model();
    let src = PhotonPairSource::default();
    let link = FiberLink::from_lengths(&[10e3], m.clone()).unwrap();
    let pd = path_delay_difference(&link, &link, &src, 22.0).unwrap();
    let d = dispersion_parameter(&m, src.center_nm(), 22.0).unwrap();
    let oracle = d * (src.idler_nm - src.signal_nm) * 10.0 * 1e-12;
    assert!((pd.group_delay_term - oracle).abs() / oracle < 0.01, "{} vs {oracle}", pd.group_delay_term);
    assert!(pd.group_delay_term > 45e-12 && pd.group_delay_term < 55e-12);
}

#[test]
fn identical_wavelengths_cancel() {
    let m = model();
    let src = PhotonPairSource { idler_nm: 1574.4, ..PhotonPairSource::default() };
    let link = FiberLink::from_lengths(&[5e3, 4e3, 1e3], m).unwrap();
    let pd = path_delay_difference(&link, &link, &src, 22.0).unwrap();
    assert!(pd.total().abs() < 1e-18);
}

#[test]
fn sensitivity_b_matches_richardson_oracle() {
    let m = model();
    let src = PhotonPairSource::default();
    let b = temperature_sensitivity_b(&m, &src, 22.0).unwrap();
    // plain central differences at h and h/2, extrapolated
    let term = |nm: f64, h: f64| {
        let k1 = |t: f64| group_delay_coefficient(&m, nm, t).unwrap();
        let om = 2.0 * std::f64::consts::PI * C / (nm * 1e-9);
        let k2 = |t: f64| homsync::fiber_model::gvd_coefficient(&m, nm, t).unwrap() * om;
        [(k1(22.0 + h) - k1(22.0 - h)) / (2.0 * h), (k2(22.0 + h) - k2(22.0 - h)) / (2.0 * h)]
    };
    let mut acc = 0.0;
    for nm in [src.signal_nm, src.idler_nm] {
        let (a, c) = (term(nm, 0.02), term(nm, 0.01));
        for k in 0..2 {
            let r = (4.0 * c[k] - a[k]) / 3.0;
            acc += r * r;
        }
    }
    let oracle = acc.sqrt();
    assert!((b - oracle).abs() / oracle < 0.01, "{b} vs {oracle}");
    assert!((4.0e-14..=6.0e-14).contains(&b));
    let t = thermal_terms(&m, src.signal_nm, 22.0).unwrap();
    assert!(t.iter().all(|v| v.is_finite()));
}

#[test]
fn identical_arms_recover_b_sqrt_sum_l2() {
    let m = model();
    let src = PhotonPairSource::default();
    let lengths = [5e3, 4e3, 1e3];
    let link = FiberLink::from_lengths(&lengths, m.clone()).unwrap();
    let c = differential_drift_coefficient(&link, &link, &src, 22.0).unwrap();
    let b = temperature_sensitivity_b(&m, &src, 22.0).unwrap();
    let oracle = b * lengths.iter().map(|l| l * l).sum::<f64>().sqrt();
    assert!((c - oracle).abs() / oracle < 1e-9);
}

proptest! {
    #[test]
    fn path_delay_is_linear_in_length(l in 100.0f64..20e3, k in 1.1f64..4.0) {
        let m = model();
        let src = PhotonPairSource::default();
        let a = FiberLink::from_lengths(&[l], m.clone()).unwrap();
        let b = a.scaled(k).unwrap();
        let pa = path_delay_difference(&a, &a, &src, 22.0).unwrap().total();
        let pb = path_delay_difference(&b, &b, &src, 22.0).unwrap().total();
        prop_assert!((pb - k * pa).abs() <= 1e-9 * pb.abs().max(1e-18));
    }

    #[test]
    fn splitting_never_increases_drift(lengths in prop::collection::vec(10.0f64..10e3, 1..12)) {
        let b = 5e-14;
        let total: f64 = lengths.iter().sum();
        let seg = drift_segmented(b, &lengths, 0.006).unwrap();
        prop_assert!(seg <= drift_single(b, total, 0.006) * (1.0 + 1e-12));
        // equal split of the same count is the minimum
        let eq = drift_segmented(b, &vec![total / lengths.len() as f64; lengths.len()], 0.006).unwrap();
        prop_assert!(eq <= seg * (1.0 + 1e-12));
    }

    #[test]
    fn drift_is_linear_in_temperature_step(l in 100.0f64..20e3, dt in 1e-4f64..1.0) {
        let b = 5e-14;
        prop_assert!((drift_single(b, l, 2.0 * dt) - 2.0 * drift_single(b, l, dt)).abs() < 1e-25);
    }
}
