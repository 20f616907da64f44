use bermudan::regress::{fit_least_squares, SparseDesign};
use bermudan::rng::{Purpose, SeedPlan};
use bermudan::spline::{bspline_univariate, SplineParams, SplineSpace};
use nalgebra::{DMatrix, DVector};

/// Cardinal B-spline by the explicit alternating sum
/// `B(s) = 1/M! sum_j (-1)^j C(M+1, j) (s - j)_+^M`, with `(0)_+^0 = 1`.
fn cardinal(degree: usize, s: f64) -> f64 {
    let mut fact = 1.0;
    for i in 1..=degree {
        fact *= i as f64;
    }
    let mut sum = 0.0;
    let mut binom = 1.0;
    for j in 0..=degree + 1 {
        let z = s - j as f64;
        let pos = if degree == 0 {
            if z >= 0.0 {
                1.0
            } else {
                0.0
            }
        } else {
            z.max(0.0).powi(degree as i32)
        };
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * binom * pos;
        binom = binom * (degree + 1 - j) as f64 / (j + 1) as f64;
    }
    sum / fact
}

fn oracle_basis(degree: usize, alpha: f64, k: i64, x: f64) -> f64 {
    cardinal(degree, x / alpha - k as f64)
}

fn uniforms(n: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    let mut s = SeedPlan::new(seed).stream(Purpose::Custom(7), 0, 0);
    (0..n).map(|_| lo + (hi - lo) * s.uniform()).collect()
}

#[test]
fn univariate_matches_cardinal_formula() {
    for degree in 0..=3 {
        for &alpha in &[0.5, 1.0, 6.25] {
            for x in uniforms(400, -10.0, 10.0, degree as u64) {
                for k in -30..30 {
                    let a = bspline_univariate(degree, alpha, k, x);
                    let b = oracle_basis(degree, alpha, k, x);
                    assert!(
                        (a - b).abs() < 1e-10,
                        "M={degree} a={alpha} k={k} x={x}: {a} vs {b}"
                    );
                }
            }
        }
    }
}

#[test]
fn partition_of_unity() {
    for degree in 0..=3 {
        for &alpha in &[0.3, 1.0, 2.5] {
            let space =
                SplineSpace::new(SplineParams::new(degree, alpha).unwrap(), 1, 4.0).unwrap();
            for x in uniforms(1000, -4.0, 4.0, 11 + degree as u64) {
                let s: f64 = space.basis_eval(&[x]).iter().map(|(_, v)| v).sum();
                assert!((s - 1.0).abs() < 1e-10, "M={degree} x={x}: {s}");
            }
        }
        let space = SplineSpace::new(SplineParams::new(degree, 0.7).unwrap(), 2, 2.0).unwrap();
        let pts = uniforms(2000, -2.0, 2.0, 3);
        for x in pts.chunks(2) {
            let s: f64 = space.basis_eval(x).iter().map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn support_exactness() {
    for degree in 0..=3 {
        let alpha = 0.5;
        let space = SplineSpace::new(SplineParams::new(degree, alpha).unwrap(), 1, 3.0).unwrap();
        for x in uniforms(500, -3.0, 3.0, 5) {
            let active = space.basis_eval(&[x]);
            assert!(active.len() <= degree + 1);
            for flat in 0..space.dimension() {
                let k = space.multi_index(flat)[0];
                let lo = k as f64 * alpha;
                let hi = (k + degree as i64 + 1) as f64 * alpha;
                let inside = x >= lo && x < hi;
                let v = active
                    .iter()
                    .find(|(f, _)| *f == flat)
                    .map_or(0.0, |(_, v)| *v);
                if !inside {
                    assert_eq!(v, 0.0, "B_{k} nonzero outside its support at {x}");
                }
                if inside && degree == 0 {
                    assert_eq!(v, 1.0);
                }
            }
        }
    }
}

#[test]
fn tensor_product_factorizes() {
    let space = SplineSpace::new(SplineParams::new(2, 0.8).unwrap(), 3, 2.0).unwrap();
    let pts = uniforms(300, -2.0, 2.0, 9);
    for x in pts.chunks(3) {
        for (flat, v) in space.basis_eval(x) {
            let k = space.multi_index(flat);
            let prod: f64 = (0..3).map(|j| oracle_basis(2, 0.8, k[j], x[j])).product();
            assert!((v - prod).abs() < 1e-12);
        }
    }
}

#[test]
fn constant_reproduction() {
    for degree in 0..=3 {
        let space = SplineSpace::new(SplineParams::new(degree, 0.5).unwrap(), 1, 2.0).unwrap();
        let xs = uniforms(400, -2.0, 2.0, 21);
        let ys = vec![3.5; xs.len()];
        let est = fit_least_squares(&space, &xs, &ys, 10.0).unwrap();
        for x in uniforms(100, -2.0, 2.0, 22) {
            assert!((est.raw(&[x]) - 3.5).abs() < 1e-9, "M={degree}");
        }
    }
}

#[test]
fn least_squares_orthogonality_and_normal_equations() {
    for degree in 0..=3 {
        let alpha = 0.4;
        let space = SplineSpace::new(SplineParams::new(degree, alpha).unwrap(), 1, 2.0).unwrap();
        let xs = uniforms(600, -2.0, 2.0, 31 + degree as u64);
        let ys: Vec<f64> = xs.iter().map(|x| (3.0 * x).sin() + 0.1 * x * x).collect();
        let est = fit_least_squares(&space, &xs, &ys, 1e6).unwrap();

        // dense design built from the cardinal formula, columns restricted to
        // functions touching the sample
        let cols: Vec<usize> = SparseDesign::splines(&space, &xs).columns;
        let b = DMatrix::from_fn(xs.len(), cols.len(), |i, j| {
            let k = space.multi_index(cols[j])[0];
            oracle_basis(degree, alpha, k, xs[i])
        });
        let y = DVector::from_vec(ys.clone());
        let fitted = DVector::from_iterator(xs.len(), xs.iter().map(|x| est.raw(&[*x])));
        let resid = &y - &fitted;
        let grad = b.transpose() * &resid;
        let rel = grad.norm() / (b.norm() * y.norm());
        assert!(rel < 1e-8, "M={degree}: {rel}");

        let gram = b.transpose() * &b;
        let rhs = b.transpose() * &y;
        let coef = gram.cholesky().expect("full rank").solve(&rhs);
        let dense_fit = &b * coef;
        assert!((dense_fit - fitted).norm() / y.norm() < 1e-8);
    }
}

#[test]
fn single_cell_mean_recovery() {
    let space = SplineSpace::new(SplineParams::new(0, 4.0).unwrap(), 1, 4.0).unwrap();
    let xs = uniforms(250, 0.0, 4.0, 41);
    let ys = uniforms(250, -1.0, 5.0, 42);
    let est = fit_least_squares(&space, &xs, &ys, 100.0).unwrap();
    let mean = ys.iter().sum::<f64>() / ys.len() as f64;
    assert!((est.raw(&[1.0]) - mean).abs() < 1e-12);
}
