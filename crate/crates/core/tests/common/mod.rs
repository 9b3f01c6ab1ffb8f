#![allow(dead_code)]

use camp_core::linalg::dot;
use camp_core::scenario::{EllipseSpec, ScenarioConfig};
use camp_core::{DenseMatrix, MpQp};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gauss_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DenseMatrix {
    let data = (0..rows * cols).map(|_| scale * gauss(rng)).collect();
    DenseMatrix::new(rows, cols, data).unwrap()
}

/// `MᵀM + shift·I`
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> DenseMatrix {
    let m = gauss_matrix(rng, n, n, 1.0 / (n as f64).sqrt());
    let mut h = m.transpose().matmul(&m).unwrap();
    for i in 0..n {
        h[(i, i)] += shift;
    }
    h
}

/// Well-conditioned dense mp-QP. With `allow_infeasible`, some right-hand
/// sides are negative, so the feasible set may be empty.
pub fn random_qp(rng: &mut ChaCha8Rng, nz: usize, nc: usize, n: usize, allow_infeasible: bool) -> MpQp {
    let h = random_spd(rng, nz, 0.5);
    let f = gauss_matrix(rng, n, nz, 1.0);
    let g = gauss_matrix(rng, nc, nz, 1.0);
    let w = (0..nc)
        .map(|_| {
            if allow_infeasible {
                rng.gen_range(-1.5..1.0)
            } else {
                rng.gen_range(0.1..2.0)
            }
        })
        .collect();
    let s = gauss_matrix(rng, nc, n, 0.5);
    MpQp::new(h, f, g, w, s).unwrap()
}

pub fn to_rows(m: &DenseMatrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

/// Ellipse around a random center with the origin strictly inside.
fn random_ellipse(rng: &mut ChaCha8Rng, n: usize, radius: f64, tangents: usize) -> EllipseSpec {
    loop {
        let center: Vec<f64> = (0..n).map(|_| 0.3 * radius * gauss(rng)).collect();
        let mut shape = random_spd(rng, n, 0.3);
        let scale = 1.0 / (radius * radius);
        for i in 0..n {
            for k in 0..n {
                shape[(i, k)] *= scale;
            }
        }
        let e = EllipseSpec::new(center, shape.to_rows(), tangents);
        if e.value(&vec![0.0; n]) < 0.6 {
            return e;
        }
    }
}

/// Random closed-loop problem with `n ≤ 3`, `m ≤ 2`, `N ≤ 8`: input box,
/// state box, one stage and one terminal ellipse; `A` may be unstable.
pub fn random_scenario(rng: &mut ChaCha8Rng, steps: usize) -> ScenarioConfig {
    let n = rng.gen_range(1..=3);
    let m = rng.gen_range(1..=2);
    let horizon = rng.gen_range(1..=8);
    let rho: f64 = rng.gen_range(0.6..1.3);
    let a = gauss_matrix(rng, n, n, rho / (n as f64).sqrt());
    let b = gauss_matrix(rng, n, m, 0.5);
    let q_w: f64 = rng.gen_range(0.5..2.0);
    let r_w: f64 = rng.gen_range(0.1..2.0);
    let eye = |k: usize, v: f64| -> Vec<Vec<f64>> {
        (0..k)
            .map(|i| (0..k).map(|j| if i == j { v } else { 0.0 }).collect())
            .collect()
    };
    let state_bound: Vec<f64> = (0..n).map(|_| rng.gen_range(2.0..5.0)).collect();
    let tangents = |rng: &mut ChaCha8Rng| if n == 1 { 2 } else { rng.gen_range(6..=16) };
    let t1 = tangents(rng);
    let t2 = tangents(rng);
    let stage = random_ellipse(rng, n, 3.0, t1);
    let terminal = random_ellipse(rng, n, 2.0, t2);
    let x0: Vec<f64> = state_bound
        .iter()
        .map(|b| rng.gen_range(-0.5 * b..0.5 * b))
        .collect();
    ScenarioConfig {
        a: a.to_rows(),
        b: b.to_rows(),
        q: eye(n, q_w),
        r: eye(m, r_w),
        p: eye(n, 1.0),
        horizon,
        input_bound: (0..m).map(|_| rng.gen_range(0.5..2.0)).collect(),
        state_bound,
        stage_ellipses: vec![stage],
        terminal_ellipses: vec![terminal],
        x0,
        steps,
        prune_radius: 0.0,
        seed: 0,
        repetitions: 1,
        warm_start: true,
        validation_samples: 200,
    }
}

/// `‖a − b‖∞`
pub fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Exact slope of the solution map on the region where row `k` alone is
/// active: `−H⁻¹Fᵀ + H⁻¹G_kᵀ(S_k + G_kH⁻¹Fᵀ)/(G_kH⁻¹G_kᵀ)`, as a dense
/// `n_z × n` matrix.
pub fn single_row_jacobian(q: &MpQp, k: usize) -> DenseMatrix {
    let (nz, n) = (q.num_vars(), q.state_dim());
    let g = q.g().row(k).to_vec();
    let hg = q.h_factor().solve_vec(&g).unwrap();
    let gk = dot(&g, &hg);
    let hft = q.h_inv_ft();
    let mut d = hft.scale(-1.0);
    for i in 0..n {
        let c = q.s()[(k, i)] + dot(&g, &hft.column_vec(i));
        for r in 0..nz {
            d[(r, i)] += hg[r] * c / gk;
        }
    }
    d
}
