//! The displacement-mismatch objective, synthetic data generation, and the
//! measurement noise floor.
//!
//! The objective is the squared displacement mismatch integrated over the
//! reference-configuration data surface (the maximal-z face set) and summed
//! over load steps:
//! `J = sum_n 1/2 int ||u^n - d^n||^2 dA`.
//! With linear shape functions the integrand is quadratic, so the
//! three-point triangle rule integrates it exactly.
//!
//! Synthetic data adds i.i.d. Gaussian noise per node, component, and step.
//! The generator is pinned down exactly so any implementation reproduces the
//! same stream: a SplitMix64 counter generator (Steele et al.) mapped to
//! uniforms in `(0, 1]` by `((x >> 11) + 1) * 2^-53`, transformed in pairs
//! by Box-Muller; both normals of a pair are consumed before drawing again.
//! Draw order is step-major, then data-surface nodes ascending, then the
//! three displacement components.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::solver::Trajectory;
use crate::{Error, Result};

/// Three-point triangle rule, degree-2 exact: barycentric coordinates and
/// equal weights `A/3`.
const TRI3_BARY: [[f64; 3]; 3] = [
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
];

/// Full-field surface displacement data on the mesh's data surface.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DicData {
    /// Hash of the mesh geometry the data was generated on.
    pub mesh_hash: String,
    /// Node ids on the data surface, ascending.
    pub node_ids: Vec<usize>,
    /// `steps[n][k]` is the displacement 3-vector of `node_ids[k]` at load
    /// step `n + 1`.
    pub steps: Vec<Vec<[f64; 3]>>,
    pub eps_noise: f64,
    pub seed: u64,
    /// Parameter vector the generating trajectory was solved with.
    pub source_beta: Vec<f64>,
}

impl DicData {
    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Map from node id to its position in `node_ids`.
    pub fn node_index(&self) -> HashMap<usize, usize> {
        self.node_ids
            .iter()
            .enumerate()
            .map(|(k, &n)| (n, k))
            .collect()
    }

    /// Checks the data belongs to this mesh and step count.
    pub fn check_compatible(&self, mesh: &Mesh, n_steps: usize) -> Result<()> {
        if self.node_ids != mesh.dic_nodes() {
            return Err(Error::DataMismatch(
                "data node set does not match the mesh data surface".into(),
            ));
        }
        if self.steps.len() != n_steps {
            return Err(Error::DataMismatch(format!(
                "data has {} steps but the schedule has {n_steps}",
                self.steps.len()
            )));
        }
        if self.mesh_hash != mesh.content_hash() {
            return Err(Error::DataMismatch(
                "data was generated on a different mesh (hash mismatch)".into(),
            ));
        }
        Ok(())
    }
}

/// SplitMix64: a 64-bit counter generator with a fixed increment and
/// avalanche finalizer.
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `(0, 1]`: 53 random bits plus one, scaled by `2^-53`.
    pub fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }
}

/// Standard normal draws by the Box-Muller transform over [`SplitMix64`].
pub struct NormalSource {
    rng: SplitMix64,
    spare: Option<f64>,
}

impl NormalSource {
    pub fn new(seed: u64) -> Self {
        NormalSource {
            rng: SplitMix64::new(seed),
            spare: None,
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = self.rng.next_uniform();
        let u2 = self.rng.next_uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// The synthetic-measurement noise level matching a 5 MP camera whose field
/// of view is filled to 80% by the specimen height, with 0.05 px of
/// displacement noise.
pub fn noise_floor(l_y: f64) -> f64 {
    assert!(l_y > 0.0, "specimen extent must be positive");
    0.05 * l_y / (0.8 * 2048.0)
}

/// Objective value and its per-step decomposition.
#[derive(Clone, Debug, Serialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub per_step: Vec<f64>,
}

/// Mismatch of one step's displacement field against one step of data,
/// integrated over the data surface with the three-point rule.
pub fn objective_step(mesh: &Mesh, u: &[f64], data_step: &[[f64; 3]], index: &HashMap<usize, usize>) -> f64 {
    let mut j = 0.0;
    for face in &mesh.dic {
        let area = mesh.face_area(face);
        // nodal mismatch vectors
        let err: [[f64; 3]; 3] = std::array::from_fn(|a| {
            let node = face.nodes[a];
            let k = index[&node];
            std::array::from_fn(|i| u[mesh.dof(node, i)] - data_step[k][i])
        });
        for gp in &TRI3_BARY {
            let mut sq = 0.0;
            for i in 0..3 {
                let e_i: f64 = (0..3).map(|a| gp[a] * err[a][i]).sum();
                sq += e_i * e_i;
            }
            j += 0.5 * sq * area / 3.0;
        }
    }
    j
}

/// The full objective over the trajectory.
pub fn evaluate_objective(
    mesh: &Mesh,
    trajectory: &Trajectory,
    data: &DicData,
) -> Result<ObjectiveValue> {
    data.check_compatible(mesh, trajectory.n_load_steps())?;
    let index = data.node_index();
    let per_step: Vec<f64> = (1..trajectory.steps.len())
        .map(|n| objective_step(mesh, &trajectory.steps[n].u, &data.steps[n - 1], &index))
        .collect();
    Ok(ObjectiveValue {
        total: per_step.iter().sum(),
        per_step,
    })
}

/// Exact derivative of one step's objective with respect to the global
/// state vector. Quadratic objective: the gradient is the face mass matrix
/// applied to the nodal mismatch; pressure dofs carry no dependence.
pub fn objective_gradient_u(
    mesh: &Mesh,
    u: &[f64],
    data_step: &[[f64; 3]],
    index: &HashMap<usize, usize>,
) -> Vec<f64> {
    let mut grad = vec![0.0; mesh.n_dofs()];
    for face in &mesh.dic {
        let area = mesh.face_area(face);
        let err: [[f64; 3]; 3] = std::array::from_fn(|a| {
            let node = face.nodes[a];
            let k = index[&node];
            std::array::from_fn(|i| u[mesh.dof(node, i)] - data_step[k][i])
        });
        // triangle mass matrix: A/12 (1 + delta_ab)
        for a in 0..3 {
            for i in 0..3 {
                let mut acc = 0.0;
                for b in 0..3 {
                    let w = if a == b { 2.0 } else { 1.0 };
                    acc += w * err[b][i];
                }
                grad[mesh.dof(face.nodes[a], i)] += acc * area / 12.0;
            }
        }
    }
    grad
}

/// Noiseless or noise-corrupted data from a converged trajectory.
///
/// With `eps_noise = 0` the data equals the forward displacements
/// bit-exactly.
pub fn synthesize_data(
    mesh: &Mesh,
    trajectory: &Trajectory,
    eps_noise: f64,
    seed: u64,
    source_beta: &[f64],
) -> DicData {
    let node_ids = mesh.dic_nodes();
    let mut normals = NormalSource::new(seed);
    let mut steps = Vec::with_capacity(trajectory.n_load_steps());
    for n in 1..trajectory.steps.len() {
        let u = &trajectory.steps[n].u;
        let mut step = Vec::with_capacity(node_ids.len());
        for &node in &node_ids {
            let mut d = [0.0; 3];
            for (i, di) in d.iter_mut().enumerate() {
                let noise = if eps_noise == 0.0 {
                    0.0
                } else {
                    normals.next_normal() * eps_noise
                };
                *di = u[mesh.dof(node, i)] + noise;
            }
            step.push(d);
        }
        steps.push(step);
    }
    DicData {
        mesh_hash: mesh.content_hash(),
        node_ids,
        steps,
        eps_noise,
        seed,
        source_beta: source_beta.to_vec(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::ElementContext;
    use crate::mesh::generate_bar;
    use crate::model::J2;
    use crate::solver::{solve_forward, Counters, LoadSchedule, Tolerances};

    fn small_problem() -> (Mesh, Vec<ElementContext>, Trajectory) {
        let mesh = generate_bar([1.0, 1.0, 0.5], [2, 2, 1], None).unwrap();
        let ctxs = ElementContext::build_all(&mesh);
        let beta = [1000.0, 0.25, 1e6, 100.0, 0.0, 0.0]; // elastic range
        let schedule = LoadSchedule::uniaxial_ramp(2, 0.5);
        let tol = Tolerances::default();
        let mut counters = Counters::default();
        let traj = solve_forward::<J2>(&mesh, &ctxs, &beta, &schedule, &tol, &mut counters).unwrap();
        (mesh, ctxs, traj)
    }

    #[test]
    fn perfect_data_gives_zero_objective() {
        let (mesh, _, traj) = small_problem();
        let data = synthesize_data(&mesh, &traj, 0.0, 7, &[0.0]);
        let j = evaluate_objective(&mesh, &traj, &data).unwrap();
        assert_eq!(j.total, 0.0);
        assert!(j.per_step.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_offset_integrates_to_half_area_csquared() {
        let (mesh, _, traj) = small_problem();
        let mut data = synthesize_data(&mesh, &traj, 0.0, 7, &[0.0]);
        let c = [0.3, -0.2, 0.1];
        for step in &mut data.steps {
            for d in step.iter_mut() {
                for i in 0..3 {
                    d[i] += c[i];
                }
            }
        }
        let j = evaluate_objective(&mesh, &traj, &data).unwrap();
        let area = 1.0 * 1.0; // the maximal-z face of the bar
        let c2 = c.iter().map(|x| x * x).sum::<f64>();
        let expect = 0.5 * area * c2;
        for step_j in &j.per_step {
            assert!(
                (step_j - expect).abs() < 1e-13,
                "step objective {step_j} vs {expect}"
            );
        }
    }

    /// The three-point rule equals the analytic integral of a quadratic on
    /// a single triangle.
    #[test]
    fn quadrature_matches_analytic_mass_integral() {
        // integral of (sum_a N_a e_a)^2 over a reference triangle equals
        // e^T M e with M = A/12 (1 + delta)
        let e = [0.7, -0.4, 0.25];
        let area = 0.5;
        let mut analytic = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let w = if a == b { 2.0 } else { 1.0 };
                analytic += w * e[a] * e[b] * area / 12.0;
            }
        }
        let mut quad = 0.0;
        for gp in &TRI3_BARY {
            let v: f64 = (0..3).map(|a| gp[a] * e[a]).sum();
            quad += v * v * area / 3.0;
        }
        assert!((quad - analytic).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_ad_and_fd() {
        let (mesh, _, traj) = small_problem();
        let mut data = synthesize_data(&mesh, &traj, 0.0, 7, &[0.0]);
        // perturb the data so the mismatch is nonzero
        for step in &mut data.steps {
            for (k, d) in step.iter_mut().enumerate() {
                d[0] += 0.01 * (k as f64 + 1.0);
                d[1] -= 0.005 * (k as f64);
            }
        }
        let index = data.node_index();
        let u = &traj.steps[1].u;
        let grad = objective_gradient_u(&mesh, u, &data.steps[0], &index);

        // AD path: seed the displacement dofs of the data surface (one
        // direction per surface dof, wider than the residual seeding modes)
        use crate::ad::Scalar;
        type Dual = crate::ad::Dual<f64, 32>;
        let dic_nodes = mesh.dic_nodes();
        let mut seeded_dofs = Vec::new();
        for &n in &dic_nodes {
            for i in 0..3 {
                seeded_dofs.push(mesh.dof(n, i));
            }
        }
        let dim = seeded_dofs.len();
        let u_dual: Vec<Dual> = (0..mesh.n_dofs())
            .map(|g| match seeded_dofs.iter().position(|&s| s == g) {
                Some(k) => Dual::seed_unit(u[g], k, dim),
                None => Dual::constant(u[g]),
            })
            .collect();
        // evaluate the quadrature loop generically
        let mut j_dual = Dual::constant(0.0);
        for face in &mesh.dic {
            let area = mesh.face_area(face);
            for gp in &TRI3_BARY {
                for i in 0..3 {
                    let mut e_i = Dual::constant(0.0);
                    for a in 0..3 {
                        let node = face.nodes[a];
                        let k = index[&node];
                        let diff = u_dual[mesh.dof(node, i)].clone()
                            - Dual::constant(data.steps[0][k][i]);
                        e_i = e_i + diff.scale(gp[a]);
                    }
                    j_dual = j_dual + (e_i.clone() * &e_i).scale(0.5 * area / 3.0);
                }
            }
        }
        for (k, &g) in seeded_dofs.iter().enumerate() {
            assert!(
                (grad[g] - j_dual.deriv(k)).abs() < 1e-14,
                "dof {g}: analytic {} vs AD {}",
                grad[g],
                j_dual.deriv(k)
            );
        }

        // central finite differences on the quadrature evaluation
        let h = 1e-6;
        for &g in seeded_dofs.iter().take(8) {
            let mut up = u.clone();
            let mut um = u.clone();
            up[g] += h;
            um[g] -= h;
            let jp = objective_step(&mesh, &up, &data.steps[0], &index);
            let jm = objective_step(&mesh, &um, &data.steps[0], &index);
            let fd = (jp - jm) / (2.0 * h);
            assert!(
                (grad[g] - fd).abs() <= 1e-8 * (1.0 + fd.abs()),
                "dof {g}: analytic {} vs FD {fd}",
                grad[g]
            );
        }

        // pressure dofs carry no gradient
        for n in mesh.dic_nodes() {
            assert_eq!(grad[mesh.dof(n, 3)], 0.0);
        }
    }

    #[test]
    fn noise_floor_values() {
        assert!((noise_floor(2.0) - 6.103_515_625e-5).abs() < 1e-12);
        assert!((noise_floor(3.25) - 9.918e-5).abs() < 5e-8);
        assert!((noise_floor(9.0) - 2.747e-4).abs() < 5e-8);
    }

    #[test]
    fn noise_statistics() {
        let mut src = NormalSource::new(42);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| src.next_normal()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.01, "sample mean {mean}");
        assert!(
            (var.sqrt() - 1.0).abs() < 0.02,
            "sample standard deviation {}",
            var.sqrt()
        );
        // successive draws are uncorrelated
        let mut cov = 0.0;
        for k in 0..(n - 1) {
            cov += (draws[k] - mean) * (draws[k + 1] - mean);
        }
        cov /= (n - 2) as f64;
        assert!(cov.abs() < 0.01, "lag-1 correlation {cov}");
    }

    #[test]
    fn same_seed_reproduces_different_seed_differs() {
        let (mesh, _, traj) = small_problem();
        let a = synthesize_data(&mesh, &traj, 1e-3, 99, &[0.0]);
        let b = synthesize_data(&mesh, &traj, 1e-3, 99, &[0.0]);
        let c = synthesize_data(&mesh, &traj, 1e-3, 100, &[0.0]);
        assert_eq!(a.steps, b.steps);
        assert_ne!(a.steps, c.steps);
    }
}
