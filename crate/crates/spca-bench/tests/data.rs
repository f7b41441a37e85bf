use irpg_core::objective::{SmoothCost, SpcaCost};
use irpg_core::Mat;
use spca_bench::data::{default_l0, gen_data, init_point};

fn column_stats(a: &Mat) -> Vec<(f64, f64)> {
    let m = a.nrows() as f64;
    a.column_iter()
        .map(|c| {
            let mean = c.iter().sum::<f64>() / m;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
            (mean, var.sqrt())
        })
        .collect()
}

#[test]
fn columns_are_standardized() {
    for (m, n, seed) in [(2, 3, 0), (20, 256, 1), (7, 40, 123)] {
        let a = gen_data(m, n, seed).unwrap();
        assert_eq!(a.shape(), (m, n));
        for (mean, std) in column_stats(&a) {
            assert!(mean.abs() <= 1e-12, "mean {mean}");
            assert!((std - 1.0).abs() <= 1e-12, "std {std}");
        }
    }
}

#[test]
fn generation_is_deterministic_per_seed() {
    assert_eq!(gen_data(20, 50, 9).unwrap(), gen_data(20, 50, 9).unwrap());
    assert_ne!(gen_data(20, 50, 9).unwrap(), gen_data(20, 50, 10).unwrap());
}

#[test]
fn pinned_fixture() {
    let a = gen_data(20, 256, 1).unwrap();
    assert_eq!(a[(0, 0)], 0.7950542901014697);
    assert_eq!(a[(19, 255)], -1.3523933523840719);
    let l1: f64 = a.iter().map(|v| v.abs()).sum();
    assert!((l1 - 4031.1069849140663).abs() <= 1e-9);
}

#[test]
fn too_few_rows_is_an_error() {
    assert!(gen_data(1, 10, 0).is_err());
    assert!(gen_data(0, 10, 0).is_err());
}

#[test]
fn init_point_of_diagonal_data() {
    let a = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 2.0, 1.0]));
    let x = init_point(&a, 2).unwrap();
    let x = x.matrix();
    assert!((x[(0, 0)].abs() - 1.0).abs() <= 1e-12);
    assert!((x[(1, 1)].abs() - 1.0).abs() <= 1e-12);
    assert!(x[(2, 0)].abs() + x[(2, 1)].abs() + x[(1, 0)].abs() + x[(0, 1)].abs() <= 1e-12);
}

#[test]
fn init_point_attains_leading_spectrum() {
    let a = gen_data(20, 60, 4).unwrap();
    let x = init_point(&a, 4).unwrap();
    let gram = x.matrix().transpose() * x.matrix();
    assert!((gram - Mat::identity(4, 4)).norm() <= 1e-12);
    let mut s: Vec<f64> = a.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    let expect: f64 = -s[..4].iter().map(|v| v * v).sum::<f64>();
    let f = SpcaCost::new(a).eval(x.matrix());
    assert!((f - expect).abs() <= 1e-9 * expect.abs());
}

#[test]
fn init_point_completes_beyond_rank() {
    let a = gen_data(3, 10, 5).unwrap();
    let x = init_point(&a, 6).unwrap();
    assert!((x.matrix().transpose() * x.matrix() - Mat::identity(6, 6)).norm() <= 1e-12);
    assert!(init_point(&a, 11).is_err());
}

fn power_iteration_sigma(a: &Mat) -> f64 {
    let gram = a.transpose() * a;
    let mut v = nalgebra::DVector::from_element(a.ncols(), 1.0);
    let mut est = 0.0;
    for _ in 0..5000 {
        let w = &gram * &v;
        let next = w.norm();
        v = w / next;
        if (next - est).abs() <= 1e-15 * next {
            break;
        }
        est = next;
    }
    est.sqrt()
}

#[test]
fn default_parameter_values() {
    assert_eq!(default_l0(&Mat::identity(4, 4)), 2.0);
    let d = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0]));
    assert!((default_l0(&d) - 18.0).abs() <= 1e-12);
    for seed in 0..3 {
        let a = gen_data(20, 80, seed).unwrap();
        let s = power_iteration_sigma(&a);
        assert!((default_l0(&a) - 2.0 * s * s).abs() <= 1e-8 * 2.0 * s * s);
    }
}
