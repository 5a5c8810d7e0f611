use proptest::prelude::*;

use spikelab::baselines::{tensor_power_iteration, SpikedTensor};
use spikelab::conditions::condition2_check;
use spikelab::dynamics::{gd_step, langevin_step, Scheme};
use spikelab::harness::{apply_set, wilson_interval};
use spikelab::initializers::{fixed_correlation, log_volume_fraction, uniform_sphere};
use spikelab::landscape::{read_tensor_file, write_tensor_file};
use spikelab::rng::{derive_seed, stream};
use spikelab::signal_oracle::{alpha_c, blowup_time, k_c, power_law_bound};
use spikelab::{Beta, Disorder, Landscape, MixtureSpec};

fn mixture() -> impl Strategy<Value = Vec<(u32, f64)>> {
    prop::sample::subsequence(vec![1u32, 2, 3], 1..=3).prop_flat_map(|ps| {
        let n = ps.len();
        prop::collection::vec(0.2f64..2.0, n).prop_map(move |a| ps.iter().copied().zip(a).collect())
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn steps_stay_on_the_sphere(
        n in 3usize..14,
        mix in mixture(),
        k in prop::sample::select(vec![2.0, 3.0, 4.0]),
        lambda in 0.0f64..5.0,
        seed in any::<u64>(),
        h in 1e-4f64..2e-2,
    ) {
        let spec = MixtureSpec::new(n, mix.clone(), k, lambda, Beta::Finite(1.5)).unwrap();
        let d = Disorder::sample(&spec, seed).unwrap();
        let l = Landscape::new(&spec, &d).unwrap();
        let mut r = stream(seed, &[9]);
        let x = uniform_sphere(n, &mut r).unwrap();
        let y = langevin_step(&l, &x, h, &mut r).unwrap();
        prop_assert!((dot(y.coords(), y.coords()) / n as f64 - 1.0).abs() < 1e-12);
        let gspec = spec.clone().with_beta(Beta::Infinite).unwrap();
        let gl = Landscape::new(&gspec, &d).unwrap();
        for scheme in [Scheme::ProjectedEulerMaruyama, Scheme::ProjectedRk4] {
            let z = gd_step(&gl, &x, h, scheme).unwrap();
            prop_assert!((dot(z.coords(), z.coords()) / n as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn covariant_gradient_is_tangent(n in 3usize..14, mix in mixture(), seed in any::<u64>(), lambda in 0.0f64..5.0) {
        let spec = MixtureSpec::new(n, mix, 3.0, lambda, Beta::Finite(1.0)).unwrap();
        let d = Disorder::sample(&spec, seed).unwrap();
        let l = Landscape::new(&spec, &d).unwrap();
        let x = uniform_sphere(n, &mut stream(seed, &[1])).unwrap();
        let g = l.covariant_gradient(&x);
        let scale = dot(&g, &g).sqrt() * (n as f64).sqrt() + 1.0;
        prop_assert!(dot(&g, x.coords()).abs() < 1e-10 * scale);
    }

    #[test]
    fn disorder_is_a_function_of_its_seed(n in 2usize..10, mix in mixture(), seed in any::<u64>()) {
        let spec = MixtureSpec::new(n, mix, 3.0, 1.0, Beta::Infinite).unwrap();
        let a = Disorder::sample(&spec, seed).unwrap();
        let b = Disorder::sample(&spec, seed).unwrap();
        for p in a.orders() {
            prop_assert_eq!(a.tensor(p), b.tensor(p));
        }
    }

    #[test]
    fn tensor_files_round_trip(n in 1usize..6, p in 1u32..4, seed in any::<u64>(), values in prop::collection::vec(-1e6f64..1e6, 216)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.stld");
        let entries = &values[..n.pow(p)];
        write_tensor_file(&path, n, p, seed, entries).unwrap();
        let (h, back) = read_tensor_file(&path).unwrap();
        prop_assert_eq!((h.n as usize, h.p, h.seed), (n, p, seed));
        prop_assert_eq!(back.as_slice(), entries);
    }

    #[test]
    fn complementary_windows_cover_the_sphere(n in 3usize..200, cut in -0.99f64..0.99) {
        let a = log_volume_fraction(n, -1.0, cut).unwrap().exp();
        let b = log_volume_fraction(n, cut, 1.0).unwrap().exp();
        prop_assert!((a + b - 1.0).abs() < 1e-10);
    }

    #[test]
    fn fixed_correlation_is_exact(n in 2usize..50, r in -0.99f64..0.99, seed in any::<u64>()) {
        let x = fixed_correlation(n, r, &mut stream(seed, &[])).unwrap();
        prop_assert!((x.m() - r).abs() < 1e-12);
    }

    #[test]
    fn wilson_interval_brackets_the_rate(total in 1usize..500, frac in 0.0f64..=1.0) {
        let s = ((total as f64) * frac).floor() as usize;
        let (lo, hi) = wilson_interval(s, total);
        let p = s as f64 / total as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn seeds_do_not_collide_on_small_grids(master in any::<u64>()) {
        let mut seen = std::collections::HashSet::new();
        for a in 0..8u64 {
            for b in 0..8u64 {
                for c in 0..8u64 {
                    prop_assert!(seen.insert(derive_seed(master, &[a, b, c])));
                }
            }
        }
    }

    #[test]
    fn power_law_bound_grows_until_blowup(a in 0.01f64..2.0, c in 0.1f64..3.0, gamma in 1.2f64..4.0, frac in 0.0f64..0.95) {
        let tb = blowup_time(a, c, gamma).unwrap();
        let t = frac * tb;
        let h = power_law_bound(a, c, gamma, t).unwrap();
        prop_assert!(h >= a * (1.0 - 1e-12));
        let h2 = power_law_bound(a, c, gamma, t + 0.01 * (tb - t)).unwrap();
        prop_assert!(h2 >= h);
    }

    #[test]
    fn thresholds_approach_their_limits_monotonically(k in 2.0f64..6.0, n in 1u32..50) {
        prop_assert!(alpha_c(k, Some(n + 1)) <= alpha_c(k, Some(n)) + 1e-15);
        prop_assert!(alpha_c(k, None) <= alpha_c(k, Some(n)) + 1e-15);
        prop_assert!(k_c(Some(n)) < 2.0 && k_c(Some(n)) <= k_c(Some(n + 1)));
    }

    #[test]
    fn condition2_fractions_are_monotone(n in 4usize..40, seed in any::<u64>(), mut eps in prop::collection::vec(-3.0f64..3.0, 1..6)) {
        let mut r = stream(seed, &[]);
        let xs: Vec<_> = (0..50).map(|_| uniform_sphere(n, &mut r).unwrap()).collect();
        eps.sort_by(f64::total_cmp);
        let fr = condition2_check(&xs, &eps);
        prop_assert!(fr.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn power_iterates_are_unit_vectors(n in 2usize..12, k in 2u32..4, lambda in 0.0f64..3.0, seed in any::<u64>()) {
        let y = SpikedTensor::sample(n, k, lambda, seed).unwrap();
        let mut r = stream(seed, &[1]);
        let x = uniform_sphere(n, &mut r).unwrap();
        let x0: Vec<f64> = x.coords().iter().map(|v| v / (n as f64).sqrt()).collect();
        let run = tensor_power_iteration(&y, &x0, 5, &mut r).unwrap();
        prop_assert!((dot(&run.x, &run.x) - 1.0).abs() < 1e-12);
        prop_assert!(run.overlaps.iter().all(|o| o.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn integer_overrides_parse_as_integers(v in any::<i32>()) {
        let mut t = toml::Table::new();
        apply_set(&mut t, &format!("a.b={v}")).unwrap();
        prop_assert_eq!(t["a"]["b"].as_integer(), Some(v as i64));
    }
}
