//! Cross-bound consistency on a small regression grid.

use widenet_core::bound_engine::{
    collect_stats, evaluate, q_bound_theoretical, BoundContext, BoundId, BoundReport, Mode, StatsOptions,
};
use widenet_core::limit_kernel::{compute_kernel, InitialMode, KernelOptions, KernelSequence};
use widenet_core::net_model::{ActivationSpec, NetConfig, WeightLaw};
use widenet_core::quadrature::QuadratureSpec;

const X: [f64; 4] = [1.0, -0.5, 0.25, 0.8];
const Y: [f64; 4] = [-0.3, 0.9, 0.4, -0.2];

fn kernel(cfg: &NetConfig) -> KernelSequence {
    let opts =
        KernelOptions { quadrature: QuadratureSpec::default(), initial: InitialMode::Auto { m: 50_000, seed: 3 } };
    compute_kernel(cfg, &opts).unwrap()
}

fn grid() -> Vec<NetConfig> {
    let mut out = Vec::new();
    for (act, law) in
        [(ActivationSpec::tanh(), WeightLaw::gaussian()), (ActivationSpec::relu(), WeightLaw::rademacher())]
    {
        for l in 1..=3 {
            for n in [64, 256, 1024] {
                out.push(
                    NetConfig::equal_width(4, n, l, 1.0, 1.0, act.clone(), law.clone(), vec![X.to_vec()]).unwrap(),
                );
            }
        }
    }
    out
}

fn report(cfg: &NetConfig, k: &KernelSequence, id: BoundId) -> BoundReport {
    evaluate(id, &BoundContext::new(cfg, k).with_mode(Mode::Theoretical))
}

#[test]
fn finale_uno_dominates_semi_empirical_with_theoretical_q2() {
    for cfg in grid() {
        let k = kernel(&cfg);
        let semi = report(&cfg, &k, BoundId::KdistSemi);
        let uno = report(&cfg, &k, BoundId::FinaleUno);
        assert!(semi.is_finite() || !uno.is_finite(), "{:?}", semi.reasons);
        assert!(
            uno.ln_value >= semi.ln_value,
            "L = {} n = {}: {} < {}",
            cfg.depth(),
            cfg.width(1),
            uno.ln_value,
            semi.ln_value
        );
    }
}

#[test]
fn finale_uno_halves_when_widths_quadruple() {
    for l in 1..=3 {
        let at = |n| {
            let cfg = NetConfig::equal_width(
                4,
                n,
                l,
                1.0,
                1.0,
                ActivationSpec::tanh(),
                WeightLaw::gaussian(),
                vec![X.to_vec()],
            )
            .unwrap();
            report(&cfg, &kernel(&cfg), BoundId::FinaleUno).ln_value
        };
        assert!((at(64) - at(256) - std::f64::consts::LN_2).abs() < 1e-12);
    }
}

#[test]
fn reports_recombine_and_round_trip() {
    for cfg in grid() {
        let k = kernel(&cfg);
        for id in BoundId::ALL {
            let r = report(&cfg, &k, id);
            assert_eq!(r.bound_id, id);
            if r.preconditions_ok {
                assert_eq!(r.recombine(), (r.ln_value, r.value), "{}", id.label());
            } else {
                assert_eq!(r.value, f64::INFINITY);
                assert!(!r.reasons.is_empty());
            }
            assert_eq!(BoundReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        }
    }
}

#[test]
fn q_bound_grows_with_depth() {
    let cfg =
        NetConfig::equal_width(4, 128, 3, 1.0, 1.0, ActivationSpec::tanh(), WeightLaw::gaussian(), vec![X.to_vec()])
            .unwrap();
    let v: Vec<f64> = (1..=3).map(|l| q_bound_theoretical(&cfg, l, 1).unwrap().ln_value).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]), "{v:?}");
}

#[test]
fn semi_empirical_multi_input_bound_is_tighter_than_explicit() {
    let cfg = NetConfig::equal_width(
        4,
        256,
        2,
        0.5,
        1.0,
        ActivationSpec::identity(),
        WeightLaw::gaussian(),
        vec![X.to_vec(), Y.to_vec()],
    )
    .unwrap();
    let k = kernel(&cfg);
    let stats = collect_stats(&cfg, &k, &StatsOptions { m: 5_000, ..StatsOptions::default() }).unwrap();
    let mod_kg = evaluate(BoundId::ModKG, &BoundContext::new(&cfg, &k).with_stats(&stats));
    let pres = report(&cfg, &k, BoundId::PresSecProb);
    assert!(mod_kg.is_finite(), "{:?}", mod_kg.reasons);
    assert!(mod_kg.ln_value <= pres.ln_value, "{} > {}", mod_kg.ln_value, pres.ln_value);
}
