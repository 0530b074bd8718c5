//! Finite-difference forward and adjoint solvers on intervals and rectangles with Dirichlet
//! boundary conditions.

mod coef;
mod grid;
mod heat;
pub mod io;
mod ops;
mod wave;

pub use coef::{CoefficientField, SpaceFn, SpaceTimeFn, VectorFn};
pub use grid::{Grid, GridFunction};
pub use heat::{
    blow_up_threshold, path_increments, solve_heat, solve_heat_with_potential,
    solve_semilinear_heat, solve_stoch_heat, solve_stoch_heat_path, stoch_heat_map, Direction,
    HeatOperator, LogNonlinearity, BLOW_UP_LEVEL,
};
pub use ops::{heat_generator, mass, stiffness, DofLayout};
pub use wave::{
    primitive, solve_stoch_wave, solve_wave, stoch_wave_map, stoch_wave_path, wave_energy, Damping,
    Nonlinearity, WaveSystem,
};

/// Time-indexed evolution on one grid.
///
/// `states[k]` is the snapshot at `t_k`. Heat trajectories carry interior values only; wave
/// trajectories carry every unknown of `layout` (interior nodes plus damped endpoints) in
/// both `states` and `velocities`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    pub layout: DofLayout,
    pub states: Vec<Vec<f64>>,
    pub velocities: Option<Vec<Vec<f64>>>,
    /// Adjoint stage values `w^n`, one per step, from a backward heat solve.
    pub stages: Option<Vec<Vec<f64>>>,
    /// First step at which the semilinear solver saw `|y|_∞` above the blow-up level.
    pub blow_up_step: Option<usize>,
}

impl Trajectory {
    pub fn new(grid: Grid, states: Vec<Vec<f64>>) -> Self {
        Self {
            grid,
            layout: DofLayout::interior_only(&grid),
            states,
            velocities: None,
            stages: None,
            blow_up_step: None,
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn blew_up(&self) -> bool {
        self.blow_up_step.is_some()
    }

    /// Interior values at step `k`.
    pub fn snapshot(&self, k: usize) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.layout.interior_slice(&self.states[k]).to_vec(),
        }
    }

    pub fn initial(&self) -> GridFunction {
        self.snapshot(0)
    }

    pub fn terminal(&self) -> GridFunction {
        self.snapshot(self.states.len() - 1)
    }

    /// Interior velocity at step `k`, if present.
    pub fn velocity(&self, k: usize) -> Option<GridFunction> {
        self.velocities.as_ref().map(|v| GridFunction {
            grid: self.grid,
            values: self.layout.interior_slice(&v[k]).to_vec(),
        })
    }
}
