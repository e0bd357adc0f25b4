//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use topoforge::dataset::LoadedDataset;
use topoforge::fem::{element_stiffness, LoadCase, MeshSpec};
use topoforge::gan::GanConfig;
use topoforge::nn::{LayerSpec, NdArray, Network};
use topoforge::DensityField;

/// Dense assembly of the full stiffness matrix followed by Gauss-Jordan
/// elimination on the free block.
pub fn dense_oracle(mesh: &MeshSpec, x: &DensityField, penal: f64, load: &LoadCase) -> Vec<f64> {
    let ndof = mesh.dof_count();
    let ke = element_stiffness(mesh.young, mesh.poisson).unwrap();
    let mut k = vec![vec![0.0; ndof]; ndof];
    for ex in 0..mesh.nelx {
        for ey in 0..mesh.nely {
            let s = x.get(ex, ey).powf(penal);
            let dofs = mesh.element_dofs(ex, ey);
            for a in 0..8 {
                for b in 0..8 {
                    k[dofs[a]][dofs[b]] += s * ke[a][b];
                }
            }
        }
    }
    let free: Vec<usize> = (0..ndof).filter(|d| !load.fixed_dofs.contains(d)).collect();
    let f = load.force_vector(ndof);
    let n = free.len();
    let mut m: Vec<Vec<f64>> = free
        .iter()
        .map(|&i| {
            let mut row: Vec<f64> = free.iter().map(|&j| k[i][j]).collect();
            row.push(f[i]);
            row
        })
        .collect();
    for c in 0..n {
        let p = (c..n).max_by(|&a, &b| m[a][c].abs().total_cmp(&m[b][c].abs())).unwrap();
        m.swap(c, p);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let factor = m[r][c];
                for j in 0..=n {
                    m[r][j] -= factor * m[c][j];
                }
            }
        }
    }
    let mut u = vec![0.0; ndof];
    for (i, &dof) in free.iter().enumerate() {
        u[dof] = m[i][n];
    }
    u
}

pub fn random_field(nelx: usize, nely: usize, rng: &mut ChaCha8Rng) -> DensityField {
    let values = (0..nelx * nely).map(|_| rng.gen_range(0.2..1.0)).collect();
    DensityField::new(nelx, nely, values).unwrap()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}


pub type ElementMatrix = [[f64; 8]; 8];

/// Element stiffness by 2x2 Gauss quadrature of B^T D B over a unit square,
/// nodes counter-clockwise from the lower-left corner.
pub fn quadrature_stiffness(young: f64, nu: f64) -> ElementMatrix {
    let s = young / (1.0 - nu * nu);
    let d = [[s, s * nu, 0.0], [s * nu, s, 0.0], [0.0, 0.0, s * (1.0 - nu) / 2.0]];
    let xi_n = [-1.0, 1.0, 1.0, -1.0];
    let eta_n = [-1.0, -1.0, 1.0, 1.0];
    let g = 1.0 / 3f64.sqrt();
    let mut k = [[0.0; 8]; 8];
    for xi in [-g, g] {
        for eta in [-g, g] {
            let mut b = [[0.0; 8]; 3];
            for i in 0..4 {
                // x = (xi + 1) / 2, so d/dx = 2 d/dxi
                let dx = 0.5 * xi_n[i] * (1.0 + eta * eta_n[i]);
                let dy = 0.5 * eta_n[i] * (1.0 + xi * xi_n[i]);
                b[0][2 * i] = dx;
                b[1][2 * i + 1] = dy;
                b[2][2 * i] = dy;
                b[2][2 * i + 1] = dx;
            }
            for r in 0..8 {
                for c in 0..8 {
                    let mut acc = 0.0;
                    for p in 0..3 {
                        for q in 0..3 {
                            acc += b[p][r] * d[p][q] * b[q][c];
                        }
                    }
                    // Jacobian determinant of the unit-square map
                    k[r][c] += 0.25 * acc;
                }
            }
        }
    }
    k
}

pub const H: f64 = 1e-5;
pub const PROBES: usize = 100;
pub const TOL: f64 = 1e-4;

pub fn random_array(shape: Vec<usize>, rng: &mut ChaCha8Rng) -> NdArray<f64> {
    let n = shape.iter().product();
    // keep values away from the leaky-relu kink so differences never straddle it
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) { v } else { -v }
        })
        .collect();
    NdArray::new(shape, data).unwrap()
}

/// sum(weights * net(x)), with the dropout stream reset so every evaluation
/// sees the same mask.
pub fn loss(net: &mut Network<f64>, x: &NdArray<f64>, weights: &NdArray<f64>) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let y = net.forward(x, &mut rng).unwrap();
    y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Compares analytic gradients with central differences at `PROBES` random
/// inputs and parameters; returns the worst relative error.
pub fn grad_check(name: &str, input: Vec<usize>, specs: Vec<LayerSpec>, batch: usize) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut net: Network<f64> = Network::new(input.clone(), specs, &mut rng).unwrap();
    for p in net.params_mut() {
        for v in &mut p.value {
            *v = rng.gen_range(-0.6..0.6);
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(&input);
    let x = random_array(shape, &mut rng);
    let mut out_shape = vec![batch];
    out_shape.extend_from_slice(net.output_shape());
    let weights = random_array(out_shape, &mut rng);

    loss(&mut net, &x, &weights);
    net.zero_grads();
    let dx = net.backward(&weights).unwrap();
    let analytic: Vec<Vec<f64>> = net.params().map(|p| p.grad.clone()).collect();
    let param_sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total_params: usize = param_sizes.iter().sum();

    let mut worst = 0.0f64;
    for probe in 0..PROBES {
        // alternate between parameter and input probes when both exist
        let use_input = total_params == 0 || probe % 2 == 1;
        if use_input {
            let j = rng.gen_range(0..x.len());
            let mut xp = x.clone();
            xp.data_mut()[j] += H;
            let mut xm = x.clone();
            xm.data_mut()[j] -= H;
            let fd = (loss(&mut net, &xp, &weights) - loss(&mut net, &xm, &weights)) / (2.0 * H);
            let e = rel_err(dx.data()[j], fd);
            if e >= TOL {
                return Err(format!("{name}: input[{j}] analytic {} vs fd {fd} (rel {e:.2e})", dx.data()[j]));
            }
            worst = worst.max(e);
        } else {
            let mut flat = rng.gen_range(0..total_params);
            let mut which = 0;
            while flat >= param_sizes[which] {
                flat -= param_sizes[which];
                which += 1;
            }
            let bump = |net: &mut Network<f64>, delta: f64| {
                net.params_mut().nth(which).unwrap().value[flat] += delta;
            };
            bump(&mut net, H);
            let plus = loss(&mut net, &x, &weights);
            bump(&mut net, -2.0 * H);
            let minus = loss(&mut net, &x, &weights);
            bump(&mut net, H);
            let fd = (plus - minus) / (2.0 * H);
            let e = rel_err(analytic[which][flat], fd);
            if e >= TOL {
                return Err(format!(
                    "{name}: param {which}[{flat}] analytic {} vs fd {fd} (rel {e:.2e})",
                    analytic[which][flat]
                ));
            }
            worst = worst.max(e);
        }
    }
    Ok(worst)
}

/// Small GAN that trains in well under a second per epoch.
pub fn toy_config() -> GanConfig {
    GanConfig {
        resolution: (12, 12),
        latent_dim: 6,
        batch_size: 4,
        epochs: 1,
        seed: 5,
        gen_channels: 8,
        critic_channels: 4,
        ..GanConfig::default()
    }
}

/// Blocks whose filled width follows the label.
pub fn toy_dataset(n: usize, nelx: usize, nely: usize) -> LoadedDataset {
    let mut grids = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let v = 0.3 + 0.4 * i as f32 / (n.max(2) - 1) as f32;
        let filled = (v * nelx as f32).round() as usize;
        for _ in 0..nely {
            for x in 0..nelx {
                grids.push(if x < filled { 1.0 } else { 0.0 });
            }
        }
        labels.push(v);
    }
    LoadedDataset {
        nelx,
        nely,
        ids: (0..n).map(|i| format!("toy{i}")).collect(),
        labels,
        grids,
    }
}
