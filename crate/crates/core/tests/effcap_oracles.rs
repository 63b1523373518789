use noma_ee_core::effcap::*;
use noma_ee_core::model::*;
use noma_ee_core::quadrature::AdaptiveQuadrature;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params() -> SystemParams {
    let noise = noise_power_from_density(-174.0, 18_000.0).unwrap();
    SystemParams::new(1e-3, 18_000.0, noise, dbm_to_watts(46.0)).unwrap()
}

fn profile(d: f64) -> UserProfile {
    UserProfile::new(d, 4.0, 0.6, 1000.0, 0.01, 10e-3, 0.1).unwrap()
}

struct Config {
    profiles: Vec<UserProfile>,
    alloc: PowerAllocation,
    tx: Vec<f64>,
    u: QosExponent,
}

fn random_config(rng: &mut ChaCha8Rng) -> Config {
    let p = params();
    let k = rng.random_range(1..=4);
    let mut d: Vec<f64> = (0..k).map(|_| rng.random_range(100.0..1000.0)).collect();
    d.sort_by(f64::total_cmp);
    let powers = (0..k)
        .map(|_| 10f64.powf(rng.random_range(-4.0..p.peak_power_w().log10())))
        .collect();
    Config {
        profiles: d.iter().map(|&d| profile(d)).collect(),
        alloc: PowerAllocation::new(powers, &p).unwrap(),
        tx: (0..k).map(|_| rng.random_range(0.05..1.0)).collect(),
        u: QosExponent::new(10f64.powf(rng.random_range(-5.0..-3.05))).unwrap(),
    }
}

#[test]
fn quadrature_agrees_with_monte_carlo() {
    let p = params();
    let quad = AdaptiveQuadrature::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..12 {
        let c = random_config(&mut rng);
        for k in 0..c.profiles.len() {
            let q = EffCapQuery { k, alloc: &c.alloc, tx_probs: &c.tx, u: c.u, params: &p, profiles: &c.profiles };
            let exact = effcap_k_user(&q, &quad).unwrap();
            let mc = effcap_monte_carlo(&q, 200_000, &mut rng).unwrap();
            let band = (0.01 * exact).max(4.0 * mc.std_error);
            assert!((exact - mc.value).abs() <= band, "k={k} exact={exact} mc={mc:?}");
        }
    }
}

#[test]
fn two_user_densities_match_k_user_tail() {
    let p = params();
    let quad = AdaptiveQuadrature::default();
    let profiles = [profile(300.0), profile(600.0)];
    for (p1, p2, tx2, u) in [
        (0.3, 0.5, 0.93, 3e-4),
        (1e-3, 1e-4, 0.5, 1e-4),
        (39.0, 0.01, 1.0, 8e-4),
        (0.01, 10.0, 0.2, 5e-5),
    ] {
        let alloc = PowerAllocation::new(vec![p1, p2], &p).unwrap();
        let u = QosExponent::new(u).unwrap();
        let tx = [0.9, tx2];
        let q = |k| EffCapQuery { k, alloc: &alloc, tx_probs: &tx, u, params: &p, profiles: &profiles };
        let first = effcap_two_user_first(&alloc, tx2, u, &p, &profiles, &quad).unwrap();
        let second = effcap_two_user_second(&alloc, u, &p, &profiles, &quad).unwrap();
        let k0 = effcap_k_user(&q(0), &quad).unwrap();
        let k1 = effcap_k_user(&q(1), &quad).unwrap();
        assert!(((first - k0) / k0).abs() < 1e-6, "{first} {k0}");
        assert!(((second - k1) / k1).abs() < 1e-9, "{second} {k1}");
    }
}

#[test]
fn interferer_power_substitution_is_detectably_wrong() {
    let p = params();
    let quad = AdaptiveQuadrature::default();
    let profiles = [profile(300.0), profile(600.0)];
    let alloc = PowerAllocation::new(vec![0.05, 20.0], &p).unwrap();
    let tx = [0.9, 0.9];
    let u = QosExponent::new(3e-4).unwrap();
    let q = EffCapQuery { k: 0, alloc: &alloc, tx_probs: &tx, u, params: &p, profiles: &profiles };
    let right = effcap_k_user(&q, &quad).unwrap();
    let wrong = effcap_k_user_with(&q, &quad, SubstitutionPower::Interferer).unwrap();
    let mc = effcap_monte_carlo(&q, 200_000, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!((right - mc.value).abs() <= (0.01 * right).max(4.0 * mc.std_error));
    assert!((wrong - mc.value).abs() > 0.05 * mc.value, "{wrong} vs {}", mc.value);
}

fn alpha(k: usize, powers: &[f64], tx: &[f64], u: f64) -> f64 {
    let p = params();
    let profiles: Vec<_> = [300.0, 600.0, 900.0][..powers.len()].iter().map(|&d| profile(d)).collect();
    let alloc = PowerAllocation::new(powers.to_vec(), &p).unwrap();
    let q = EffCapQuery { k, alloc: &alloc, tx_probs: tx, u: QosExponent::new(u).unwrap(), params: &p, profiles: &profiles };
    effcap_k_user(&q, &AdaptiveQuadrature::default()).unwrap()
}

fn log_power() -> impl Strategy<Value = f64> {
    (-5.0f64..1.5).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nondecreasing_in_own_power(a in log_power(), b in log_power(), i in log_power()) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let tx = [0.9, 0.9];
        prop_assert!(alpha(0, &[lo, i], &tx, 3e-4) <= alpha(0, &[hi, i], &tx, 3e-4) * (1.0 + 1e-9));
    }

    #[test]
    fn nonincreasing_in_interferer_power(own in log_power(), a in log_power(), b in log_power()) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let tx = [0.9, 0.9];
        prop_assert!(alpha(0, &[own, hi], &tx, 3e-4) <= alpha(0, &[own, lo], &tx, 3e-4) * (1.0 + 1e-9));
    }

    #[test]
    fn nonincreasing_in_exponent(own in log_power(), i in log_power(), a in -6.0f64..-3.01, b in -6.0f64..-3.01) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let tx = [0.9, 0.9];
        let (ulo, uhi) = (10f64.powf(lo), 10f64.powf(hi));
        prop_assert!(alpha(0, &[own, i], &tx, uhi) <= alpha(0, &[own, i], &tx, ulo) * (1.0 + 1e-9));
    }

    #[test]
    fn concave_in_own_power(a in 0.0f64..39.8, b in 0.0f64..39.8, i in log_power()) {
        let tx = [0.9, 0.9];
        let mid = alpha(1, &[i, 0.5 * (a + b)], &tx, 3e-4);
        let ends = 0.5 * (alpha(1, &[i, a], &tx, 3e-4) + alpha(1, &[i, b], &tx, 3e-4));
        prop_assert!(mid - ends >= -1e-9 * mid.max(1.0));
    }

    #[test]
    fn bounded_by_interference_free_ergodic_rate(own in log_power(), i in log_power()) {
        // Jensen: the effective capacity never exceeds the mean rate
        let p = params();
        let tx = [0.9, 0.9];
        let chi = profile(300.0).channel_rate();
        let snr = own / (chi * p.noise_power_w());
        // mean of B log2(1 + snr g), g ~ Exp(1), is B/ln2 e^(1/snr) E1(1/snr) <= B log2(1 + snr)
        let cap = p.bandwidth_hz() * snr.ln_1p() / std::f64::consts::LN_2;
        prop_assert!(alpha(0, &[own, i], &tx, 3e-4) <= cap);
    }
}
