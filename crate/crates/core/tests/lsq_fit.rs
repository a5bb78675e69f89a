mod support;

use gpc_core::lsq::{batch_fit, build_normal_system, evaluate, pixel_positions, polyfit, solve_linear, sse, ScanLineSet};
use gpc_core::parexec::Sequential;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exact_recovery_bounded_range() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for n in [10usize, 100, 6000] {
        for m in 0..=3usize {
            for d in 0..=m {
                let b: Vec<f64> = (0..=d).map(|_| rng.gen_range(-1000.0..1000.0)).collect();
                let truth = support::bounded_poly(&b, n);
                let xs = pixel_positions(n);
                let ys: Vec<f64> = xs.iter().map(|&x| support::eval_naive(&truth, x)).collect();
                let fit = polyfit(&Sequential, &xs, &ys, m).unwrap();
                let mut want = truth.clone();
                want.resize(m + 1, 0.0);
                // coefficients that should vanish are compared on the data scale
                let got: Vec<f64> = fit
                    .coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, a)| if j > d { a * (n as f64).powi(j as i32) / 1000.0 } else { *a })
                    .collect();
                let err = support::max_rel_err(&got, &want);
                assert!(err <= 1e-6, "n={n} m={m} d={d} err={err}");
            }
        }
    }
}

#[test]
fn order_zero_is_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ys: Vec<f64> = (0..777).map(|_| rng.gen_range(-5.0..50.0)).collect();
    let xs = pixel_positions(ys.len());
    let fit = polyfit(&Sequential, &xs, &ys, 0).unwrap();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert!(((fit.coeffs[0] - mean) / mean).abs() <= 1e-12);
}

#[test]
fn random_points_match_inverse_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let xs: Vec<f64> = (0..200).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 0.5 - x + 0.25 * x * x + rng.gen_range(-0.3..0.3)).collect();
    let fit = polyfit(&Sequential, &xs, &ys, 2).unwrap();
    // oracle: naive sums, explicit inverse
    let s = |p: i32| xs.iter().map(|x| x.powi(p)).sum::<f64>();
    let t = |j: i32| xs.iter().zip(&ys).map(|(x, y)| x.powi(j) * y).sum::<f64>();
    let a: Vec<f64> = (0..3).flat_map(|j| (0..3).map(move |k| j + k)).map(s).collect();
    let b: Vec<f64> = (0..3).map(t).collect();
    let want = support::inverse_solve(&a, &b).unwrap();
    assert!(support::max_rel_err(&fit.coeffs, &want) <= 1e-6);
    // and it is a minimum
    for j in 0..3 {
        for eps in [1e-3, -1e-3] {
            let mut c = fit.coeffs.clone();
            c[j] += eps;
            assert!(fit.sse <= sse(&Sequential, &c, &xs, &ys));
        }
    }
}

#[test]
fn solver_agrees_with_explicit_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for trial in 0..100 {
        let n = 1 + trial % 9;
        // diagonally dominant, hence well conditioned
        let mut a: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..n {
            a[i * n + i] += n as f64 * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let x = solve_linear(&a, &b).unwrap();
        let oracle = support::inverse_solve(&a, &b).unwrap();
        for (p, q) in x.iter().zip(&oracle) {
            assert!((p - q).abs() <= 1e-8, "n={n}: {p} vs {q}");
        }
        let bnorm = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(support::residual_inf(&a, &x, &b) <= 1e-8 * (1.0 + bnorm));
    }
}

#[test]
fn normal_equation_residual_and_minimality_at_scan_line_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = pixel_positions(6000);
    let ys: Vec<f64> = xs.iter().map(|x| 300.0 + 0.05 * x + rng.gen_range(-20.0..20.0)).collect();
    for m in 1..=3 {
        let system = build_normal_system(&Sequential, &xs, &ys, m).unwrap();
        let fit = polyfit(&Sequential, &xs, &ys, m).unwrap();
        let bnorm = system.rhs().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let res = support::residual_inf(system.matrix(), &fit.coeffs, system.rhs());
        assert!(res <= 1e-8 * (1.0 + bnorm), "m={m} residual {res}");
        for j in 0..=m {
            // perturbation scaled so that it moves the fitted values by about 1e-3
            let scale = 1.0 / 6000f64.powi(j as i32);
            for eps in [1e-3, -1e-3] {
                let mut c = fit.coeffs.clone();
                c[j] += eps * scale;
                assert!(fit.sse <= sse(&Sequential, &c, &xs, &ys));
            }
        }
    }
}

#[test]
fn batch_recovers_six_cubics() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut y = Vec::new();
    let mut truths = Vec::new();
    for _ in 0..6 {
        let b: Vec<f64> = (0..4).map(|_| rng.gen_range(-500.0..500.0)).collect();
        let t = support::bounded_poly(&b, 6000);
        y.extend((0..6000).map(|i| support::eval_naive(&t, i as f64)));
        truths.push(t);
    }
    let data = ScanLineSet::new(6, 6000, y).unwrap();
    let fits = batch_fit(&Sequential, &data, 3);
    for (fit, truth) in fits.iter().zip(&truths) {
        let fit = fit.as_ref().unwrap();
        assert!(support::max_rel_err(&fit.coeffs, truth) <= 1e-6);
    }
}

#[test]
fn single_line_batch_equals_polyfit() {
    let ys: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
    let data = ScanLineSet::new(1, 50, ys.clone()).unwrap();
    let batch = batch_fit(&Sequential, &data, 2);
    let single = polyfit(&Sequential, &pixel_positions(50), &ys, 2).unwrap();
    assert_eq!(batch[0].as_ref().unwrap(), &single);
    assert_eq!(evaluate(&single.coeffs, 0.0), single.coeffs[0]);
}
