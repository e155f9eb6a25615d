//! Instance builders shared by the benchmarks.

use almdp::data::{gen_teacher_student, kaiming_init, TeacherConfig};
use almdp::gn::build_linearization;
use almdp::{Activation, Dataset, NetworkProblem, NetworkSpec, PrimalPoint, StageSystem, Weights};

/// A teacher-student network problem with `m` samples, `[d0, hidden.., 1]`,
/// at the unrolled Kaiming initialization.
pub struct NetworkInstance {
    pub spec: NetworkSpec,
    pub data: Dataset,
    pub problem: NetworkProblem,
    pub init: Weights,
    pub z0: PrimalPoint,
}

pub fn network_instance(d0: usize, hidden: &[usize], m: usize, seed: u64) -> NetworkInstance {
    let cfg = TeacherConfig {
        input_dim: d0,
        samples: m,
        seed,
        ..TeacherConfig::default()
    };
    let data = gen_teacher_student(&cfg).expect("valid teacher config").train;
    let mut dims = vec![d0];
    dims.extend(hidden);
    dims.push(1);
    let spec = NetworkSpec::with_output_activation(dims, Activation::Softplus, Activation::Identity, m, 0.1)
        .expect("valid network");
    let problem = NetworkProblem::new(&spec, &data).expect("matching data");
    let init = kaiming_init(&spec, seed);
    let z0 = problem.feasible_point(&init).expect("finite forward pass");
    NetworkInstance { spec, data, problem, init, z0 }
}

/// The Gauss-Newton system at `z0` with a zero multiplier.
pub fn linearized(inst: &NetworkInstance, beta: f64) -> StageSystem {
    let multiplier = vec![0.0; inst.spec.layout().residual_len()];
    build_linearization(&inst.problem, &inst.z0, &multiplier, beta).expect("finite linearization")
}
