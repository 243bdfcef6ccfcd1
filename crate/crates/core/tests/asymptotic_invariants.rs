use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use wronskp_core::asymptotics::{
    ResonantParams, Side, dominant_transitions, measure_far_field, predict_kpi_asymptotics, predict_kpii_asymptotics,
    resonant_transitions, resonant_wronskian_matrix, single_wronskian_oracle,
};
use wronskp_core::wronskian::tau_symbolic;
use wronskp_core::{KpiSpectralDatum, ScenarioConfig, SigmaMode};

fn resonant_strategy() -> impl Strategy<Value = ResonantParams> {
    (1usize..4, 1usize..4, prop::bool::ANY).prop_flat_map(|(l, m, plus)| {
        let total = l + m;
        (
            prop::collection::vec(0.25f64..0.6, total),
            prop::collection::vec((0.5f64..1.5, prop::bool::ANY), total),
            Just((l, m, plus)),
        )
            .prop_map(|(gaps, bs, (l, m, plus))| {
                let mut k = -1.0;
                let kappa: Vec<f64> = gaps
                    .iter()
                    .map(|g| {
                        k += g;
                        k
                    })
                    .collect();
                let bprime = bs.iter().map(|&(v, s)| if s { v } else { -v }).collect();
                let sigma = if plus { SigmaMode::Plus } else { SigmaMode::Minus };
                ResonantParams::new(l, m, kappa, bprime, sigma).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pairing_counts_are_exact(p in resonant_strategy()) {
        let sol = predict_kpii_asymptotics(&p);
        let plus = sol.iter().filter(|s| s.side == Side::YPlus).count();
        let minus = sol.iter().filter(|s| s.side == Side::YMinus).count();
        let expect = if p.sigma == SigmaMode::Plus { (p.l, p.m) } else { (p.m, p.l) };
        prop_assert_eq!((plus, minus), expect);
    }

    #[test]
    fn pairing_matches_the_dominant_envelope_far_out(p in resonant_strategy()) {
        let sol = predict_kpii_asymptotics(&p);
        for side in [Side::YPlus, Side::YMinus] {
            let mut predicted: Vec<_> = sol.iter().filter(|s| s.side == side).map(|s| s.pair).collect();
            let mut seen = resonant_transitions(&p, 400.0 * side.sign(), 0.0);
            predicted.sort();
            seen.sort();
            prop_assert_eq!(predicted, seen);
        }
    }

    #[test]
    fn kpi_sides_share_amplitude_and_direction(
        mu in prop::collection::vec((0.6f64..1.4, prop::bool::ANY), 2..4),
        nu0 in -2.0f64..-1.0,
        dnu in prop::collection::vec(0.4f64..1.0, 3),
    ) {
        let mut nu = nu0;
        let data: Vec<KpiSpectralDatum> = mu
            .iter()
            .enumerate()
            .map(|(k, &(m, s))| {
                if k > 0 {
                    nu += dnu[k - 1];
                }
                KpiSpectralDatum::new(if s { m } else { -m }, nu, Complex64::new(1.0, 0.0))
            })
            .collect();
        let cfg = ScenarioConfig::kpi_from_mu_nu(SigmaMode::PlusI, -1.0, &data).unwrap();
        let tau = tau_symbolic(&cfg).unwrap();
        let sol = predict_kpi_asymptotics(&cfg, &tau).unwrap();
        for n in 1..=data.len() {
            let plus = sol.iter().find(|s| s.pair.0 == n && s.side == Side::YPlus).unwrap();
            let minus = sol.iter().find(|s| s.pair.0 == n && s.side == Side::YMinus).unwrap();
            prop_assert!((plus.amplitude - minus.amplitude).abs() < 1e-6);
            prop_assert!((plus.wavevector[0] - minus.wavevector[0]).abs() < 1e-6);
            prop_assert!((plus.wavevector[1] - minus.wavevector[1]).abs() < 1e-6);
            prop_assert!(plus.phase_offset.is_finite() && minus.phase_offset.is_finite());
        }
        // Parallel iff equal ν; all ν differ here.
        for a in sol.iter().filter(|s| s.side == Side::YPlus) {
            for b in sol.iter().filter(|s| s.side == Side::YPlus && s.pair.0 > a.pair.0) {
                let cross = a.wavevector[0] * b.wavevector[1] - a.wavevector[1] * b.wavevector[0];
                prop_assert!(cross.abs() > 1e-9);
            }
        }
    }
}

#[test]
fn equal_nu_gives_parallel_wavevectors() {
    let data = [KpiSpectralDatum::new(1.0, 0.8, Complex64::new(1.0, 0.0)), KpiSpectralDatum::new(1.5, 0.8, Complex64::new(1.0, 0.0))];
    let cfg = ScenarioConfig::kpi_from_mu_nu(SigmaMode::PlusI, -1.0, &data).unwrap();
    let sol = predict_kpi_asymptotics(&cfg, &tau_symbolic(&cfg).unwrap()).unwrap();
    let (a, b) = (sol[0].wavevector, sol[2].wavevector);
    assert_eq!(a[0] * b[1] - a[1] * b[0], 0.0);
}

#[test]
fn single_wronskian_and_resonant_construction_agree_asymptotically() {
    let p = ResonantParams::new(2, 2, vec![-0.9, -0.2, 0.4, 1.0], vec![1.0, -1.0, 1.0, -1.0], SigmaMode::Plus).unwrap();
    let a: DMatrix<f64> = resonant_wronskian_matrix(&p);
    // All maximal minors of A share one sign.
    let minors: Vec<f64> = (0..4)
        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
        .map(|(i, j)| a[(0, i)] * a[(1, j)] - a[(0, j)] * a[(1, i)])
        .collect();
    assert!(minors.iter().all(|m| m.signum() == minors[0].signum() && m.abs() > 1e-12), "{minors:?}");
    let w = single_wronskian_oracle(&a, &p.kappa, p.sigma).unwrap();
    let tau_p = p.tau();
    let predicted = predict_kpii_asymptotics(&p);
    for side in [Side::YPlus, Side::YMinus] {
        let y = 30.0 * side.sign();
        // The Wronskian terms are indexed by the complement of the resonant subsets, so
        // identify solitons by the κ pair that changes across each transition.
        let trans = dominant_transitions(w.terms(), y, 0.0);
        let mut seen: Vec<(usize, usize)> = trans
            .iter()
            .map(|t| {
                let (l, r) = (&w.terms()[t.left].phase, &w.terms()[t.right].phase);
                let dk = r.cx.re - l.cx.re;
                let dk2 = r.cy.re - l.cy.re;
                // κ_j − κ_i = dk and κ_j² − κ_i² = dk2 / σ determine the pair.
                let sum = dk2 / dk;
                let kj = 0.5 * (sum + dk);
                let ki = 0.5 * (sum - dk);
                let idx = |k: f64| p.kappa.iter().position(|&v| (v - k).abs() < 1e-9).unwrap() + 1;
                (idx(ki), idx(kj))
            })
            .collect();
        let mut expect: Vec<_> = predicted.iter().filter(|s| s.side == side).map(|s| s.pair).collect();
        seen.sort();
        expect.sort();
        assert_eq!(seen, expect, "{side:?}");
        for s in predicted.iter().filter(|s| s.side == side) {
            let mw = measure_far_field(&w, p.sigma, s, y, 0.0).unwrap();
            let mp = measure_far_field(&tau_p, p.sigma, s, y, 0.0).unwrap();
            assert!((mw.amplitude - s.amplitude).abs() < 0.01 * s.amplitude);
            assert!((mw.amplitude - mp.amplitude).abs() < 1e-9);
            assert!((mw.offset - mp.offset).abs() < 1e-7);
        }
    }
}
