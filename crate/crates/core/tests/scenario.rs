use apshare::scenario::{self, generate, generate_with_layout, Fading, ScenarioSpec};
use apshare::NetworkInstance;

fn golden(name: &str) -> NetworkInstance {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    NetworkInstance::load(&path).unwrap()
}

fn bits(inst: &NetworkInstance) -> Vec<u64> {
    inst.gain().iter().chain(inst.noise()).chain(inst.budget()).map(|x| x.to_bits()).collect()
}

#[test]
fn independent_golden_file() {
    let inst = generate(&ScenarioSpec::new(3, 4, 7)).unwrap();
    assert_eq!(bits(&inst), bits(&golden("independent_n3_k4_seed7.toml")));
}

#[test]
fn correlated_golden_file() {
    let spec = ScenarioSpec::new(3, 6, 7).with_fading(Fading::Correlated(0.5));
    let inst = scenario::generate_correlated(&spec).unwrap();
    assert_eq!(bits(&inst), bits(&golden("correlated_n3_k6_bc05_seed7.toml")));
}

#[test]
fn gains_are_positive() {
    for seed in 0..50 {
        for fading in [Fading::Independent, Fading::Correlated(0.3), Fading::Correlated(1.0)] {
            let inst = generate(&ScenarioSpec::new(8, 64, seed).with_fading(fading)).unwrap();
            assert!(inst.gain().iter().all(|&g| g > 0.0 && g.is_finite()));
            assert!(inst.noise().iter().all(|&n| n > 0.0));
            assert!(inst.budget().iter().all(|&b| b > 0.0));
        }
    }
}

#[test]
fn independent_gain_mean_matches_distance() {
    let (inst, layout) = generate_with_layout(&ScenarioSpec::new(4, 100_000, 21)).unwrap();
    for (i, d) in layout.distance.iter().enumerate() {
        let mean = inst.gain_row(i).iter().sum::<f64>() / inst.n_channels() as f64;
        let rel = (mean * d * d - 1.0).abs();
        assert!(rel <= 0.02, "user {i}: relative error {rel}");
    }
}

/// Correlated gains average `1/d²`. Within one user the samples are strongly
/// dependent for wide coherence, so the check pools many draws.
#[test]
fn correlated_gain_mean_matches_distance() {
    for bc in [0.1, 0.2, 0.5, 1.0] {
        let (mut sum, mut count) = (0.0, 0usize);
        for seed in 0..2000 {
            let spec = ScenarioSpec::new(10, 64, seed).with_fading(Fading::Correlated(bc));
            let (inst, layout) = generate_with_layout(&spec).unwrap();
            for (i, d) in layout.distance.iter().enumerate() {
                sum += inst.gain_row(i).iter().map(|g| g * d * d).sum::<f64>();
                count += inst.n_channels();
            }
        }
        let rel = (sum / count as f64 - 1.0).abs();
        assert!(rel <= 0.02, "B_c={bc}: relative error {rel}");
    }
}

#[test]
fn narrow_coherence_reduces_to_independent() {
    let k = 40;
    let ind = generate(&ScenarioSpec::new(5, k, 3)).unwrap();
    let cor = generate(&ScenarioSpec::new(5, k, 3).with_fading(Fading::Correlated(1.0 / k as f64))).unwrap();
    assert_eq!(bits(&ind), bits(&cor));
}

fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    let cov: f64 = x.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
    cov / var
}

#[test]
fn autocorrelation_grows_with_coherence_bandwidth() {
    let mut means = Vec::new();
    for bc in [0.1, 0.2, 0.5, 1.0] {
        let mut total = 0.0;
        let mut count = 0;
        for seed in 0..100 {
            let inst = generate(&ScenarioSpec::new(10, 128, seed).with_fading(Fading::Correlated(bc))).unwrap();
            for i in 0..inst.n_users() {
                total += lag1_autocorrelation(inst.gain_row(i));
                count += 1;
            }
        }
        means.push(total / count as f64);
    }
    eprintln!("lag-1 autocorrelation by B_c: {means:?}");
    assert!(means.windows(2).all(|w| w[1] > w[0]), "{means:?}");
}

#[test]
fn same_seed_same_bits_across_runs() {
    let spec = ScenarioSpec::new(12, 96, 99).with_fading(Fading::Correlated(0.2));
    assert_eq!(bits(&generate(&spec).unwrap()), bits(&generate(&spec).unwrap()));
    let other = ScenarioSpec { seed: 100, ..spec.clone() };
    assert_ne!(bits(&generate(&spec).unwrap()), bits(&generate(&other).unwrap()));
}
