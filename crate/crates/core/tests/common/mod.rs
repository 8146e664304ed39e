#![allow(dead_code)]

use nalgebra::DMatrix;
use observability_ellipsoids::LdtSystem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn diag_system(name: &str, d: &[f64], c: &[f64]) -> LdtSystem {
    let n = d.len();
    LdtSystem::new(
        name,
        DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(d)),
        DMatrix::from_row_slice(1, n, c),
    )
    .unwrap()
}

pub fn triangular() -> LdtSystem {
    LdtSystem::from_rows("triangular", &[&[0.9, -0.165], &[0.0, 0.35]], &[&[1.0, -1.3]]).unwrap()
}

pub fn rotation(modulus: f64, phase: f64) -> LdtSystem {
    let (s, c) = phase.sin_cos();
    LdtSystem::from_rows(
        "rotation",
        &[&[modulus * c, -modulus * s], &[modulus * s, modulus * c]],
        &[&[1.0, 0.0]],
    )
    .unwrap()
}

pub struct Shape {
    pub n: usize,
    pub m: usize,
    pub min_modulus: f64,
    pub max_modulus: f64,
    pub min_gap: f64,
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Eigenvalues as (re, im) with im ≥ 0 for each conjugate pair listed once.
fn draw_spectrum(rng: &mut ChaCha8Rng, spec: &Shape) -> Vec<(f64, f64)> {
    loop {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut left = spec.n;
        while left > 0 {
            let r = rng.random_range(spec.min_modulus..spec.max_modulus);
            if left >= 2 && rng.random_bool(0.4) {
                let t = rng.random_range(0.15..std::f64::consts::PI - 0.15);
                out.push((r * t.cos(), r * t.sin()));
                left -= 2;
            } else {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                out.push((sign * r, 0.0));
                left -= 1;
            }
        }
        let all: Vec<(f64, f64)> = out
            .iter()
            .flat_map(|&(a, b)| if b > 0.0 { vec![(a, b), (a, -b)] } else { vec![(a, b)] })
            .collect();
        let separated = all.iter().enumerate().all(|(i, p)| {
            all[i + 1..]
                .iter()
                .all(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt() >= spec.min_gap)
        });
        if separated {
            return out;
        }
    }
}

/// Random system with a prescribed, well-separated spectrum and a
/// well-conditioned eigenvector basis.
pub fn random_system(rng: &mut ChaCha8Rng, spec: &Shape) -> LdtSystem {
    let n = spec.n;
    let spectrum = draw_spectrum(rng, spec);
    let mut d = DMatrix::zeros(n, n);
    let mut k = 0;
    for (a, b) in spectrum {
        if b > 0.0 {
            d[(k, k)] = a;
            d[(k + 1, k + 1)] = a;
            d[(k, k + 1)] = -b;
            d[(k + 1, k)] = b;
            k += 2;
        } else {
            d[(k, k)] = a;
            k += 1;
        }
    }
    let p = loop {
        let p = DMatrix::identity(n, n) + DMatrix::from_fn(n, n, |_, _| 0.4 * gaussian(rng) / (n as f64).sqrt());
        let sv = p.singular_values();
        if sv.min() > 0.2 && sv.max() / sv.min() < 20.0 {
            break p;
        }
    };
    let a = &p * d * p.clone().try_inverse().unwrap();
    let c = loop {
        let c = DMatrix::from_fn(spec.m, n, |_, _| gaussian(rng));
        if c.iter().all(|v| v.abs() > 0.1) {
            break c;
        }
    };
    LdtSystem::new("random", a, c).unwrap()
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
