//! Ready-made systems: the four two-mode reference examples, a zero system
//! and a seeded random bounded system.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    CoefficientSpec, IntensitySpec, KernelSpec, MarkMatrix, ModeCoefficients, SwitchedSystem, SystemSpec,
};

fn two_modes() -> Vec<String> {
    vec!["0".to_string(), "1".to_string()]
}

fn build(spec: SystemSpec) -> SwitchedSystem {
    SwitchedSystem::new(spec).expect("catalog systems are well formed")
}

/// Scalar system with `A(mode) = mode`, `B = 0`, unit swap intensity.
pub fn example1_spec(max_jumps: usize) -> SystemSpec {
    SystemSpec {
        state_dim: 1,
        control_dim: 1,
        horizon: 1.0,
        max_jumps,
        modes: two_modes(),
        cemetery: "cemetery".into(),
        initial_mode: "0".into(),
        intensity: IntensitySpec::Constant { rate: 1.0 },
        kernel: KernelSpec::Swap,
        coefficients: CoefficientSpec::PerMode {
            modes: vec![
                ModeCoefficients { a: vec![vec![0.0]], b: vec![vec![0.0]], c: None },
                ModeCoefficients { a: vec![vec![1.0]], b: vec![vec![0.0]], c: None },
            ],
        },
        bounds: None,
    }
}

pub fn example1(max_jumps: usize) -> SwitchedSystem {
    build(example1_spec(max_jumps))
}

/// Planar system with `A(mode) = B(mode) = mode * I`.
pub fn example2_spec(max_jumps: usize) -> SystemSpec {
    let eye = |s: f64| vec![vec![s, 0.0], vec![0.0, s]];
    SystemSpec {
        state_dim: 2,
        control_dim: 2,
        horizon: 1.0,
        max_jumps,
        modes: two_modes(),
        cemetery: "cemetery".into(),
        initial_mode: "0".into(),
        intensity: IntensitySpec::Constant { rate: 1.0 },
        kernel: KernelSpec::Swap,
        coefficients: CoefficientSpec::PerMode {
            modes: vec![
                ModeCoefficients { a: eye(0.0), b: eye(0.0), c: None },
                ModeCoefficients { a: eye(1.0), b: eye(1.0), c: None },
            ],
        },
        bounds: None,
    }
}

pub fn example2(max_jumps: usize) -> SwitchedSystem {
    build(example2_spec(max_jumps))
}

/// Constant coefficients with a nilpotent drift and jump matrix `C`.
pub fn example3_spec(max_jumps: usize) -> SystemSpec {
    SystemSpec {
        state_dim: 2,
        control_dim: 1,
        horizon: 1.0,
        max_jumps,
        modes: two_modes(),
        cemetery: "cemetery".into(),
        initial_mode: "0".into(),
        intensity: IntensitySpec::Constant { rate: 1.0 },
        kernel: KernelSpec::Swap,
        coefficients: CoefficientSpec::Constant {
            a: vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            b: vec![vec![0.0], vec![1.0]],
            c: Some(MarkMatrix::Shared(vec![vec![-1.0, 0.5], vec![0.0, -1.0]])),
        },
        bounds: None,
    }
}

pub fn example3(max_jumps: usize) -> SwitchedSystem {
    build(example3_spec(max_jumps))
}

/// `A = diag(1, 0)`, `B = e2`, `C = 0`: the first coordinate is uncontrolled.
pub fn example4_spec(max_jumps: usize) -> SystemSpec {
    SystemSpec {
        state_dim: 2,
        control_dim: 1,
        horizon: 1.0,
        max_jumps,
        modes: two_modes(),
        cemetery: "cemetery".into(),
        initial_mode: "0".into(),
        intensity: IntensitySpec::Constant { rate: 1.0 },
        kernel: KernelSpec::Swap,
        coefficients: CoefficientSpec::Constant {
            a: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            b: vec![vec![0.0], vec![1.0]],
            c: None,
        },
        bounds: None,
    }
}

pub fn example4(max_jumps: usize) -> SwitchedSystem {
    build(example4_spec(max_jumps))
}

/// All coefficients zero, constant intensity `rate`.
pub fn zero_system(n: usize, d: usize, max_jumps: usize, rate: f64) -> SwitchedSystem {
    build(SystemSpec {
        state_dim: n,
        control_dim: d,
        horizon: 1.0,
        max_jumps,
        modes: two_modes(),
        cemetery: "cemetery".into(),
        initial_mode: "0".into(),
        intensity: IntensitySpec::Constant { rate },
        kernel: KernelSpec::Swap,
        coefficients: CoefficientSpec::Constant { a: vec![vec![0.0; n]; n], b: vec![vec![0.0; d]; n], c: None },
        bounds: None,
    })
}

/// Three modes, uniform kernel, per-mode rates in `[0.5, 1.5]` and per-mode
/// constant `A`, `B`, `C` with entries in `[-1, 1]` (`C` scaled by 0.5).
pub fn random_bounded_spec(seed: u64, max_jumps: usize) -> SystemSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d, k) = (2, 1, 3);
    let mut mat = |r: usize, c: usize, scale: f64| -> Vec<Vec<f64>> {
        (0..r).map(|_| (0..c).map(|_| scale * rng.gen_range(-1.0..1.0)).collect()).collect()
    };
    let modes = (0..k)
        .map(|_| ModeCoefficients { a: mat(n, n, 1.0), b: mat(n, d, 1.0), c: Some(MarkMatrix::Shared(mat(n, n, 0.5))) })
        .collect();
    let rates = (0..k).map(|_| 0.5 + rng.gen::<f64>()).collect();
    SystemSpec {
        state_dim: n,
        control_dim: d,
        horizon: 1.0,
        max_jumps,
        modes: vec!["a".into(), "b".into(), "c".into()],
        cemetery: "cemetery".into(),
        initial_mode: "a".into(),
        intensity: IntensitySpec::PerMode { rates },
        kernel: KernelSpec::Uniform,
        coefficients: CoefficientSpec::PerMode { modes },
        bounds: None,
    }
}

pub fn random_bounded(seed: u64, max_jumps: usize) -> SwitchedSystem {
    build(random_bounded_spec(seed, max_jumps))
}
