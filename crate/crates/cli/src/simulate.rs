//! Synthetic data from a configured system.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sysid_core::model::simulate_full;
use sysid_core::{io, Matrix, ObservedData, Trajectory};

use crate::config::SystemSpec;

pub struct Synthetic {
    pub trajectory: Trajectory,
    pub observed: ObservedData,
}

pub fn observation_matrix(spec: &SystemSpec) -> Result<Matrix> {
    let n = spec.x.to_vector().len();
    match &spec.c {
        Some(c) => c.to_matrix("C"),
        None => Ok(Matrix::identity(n, n)),
    }
}

/// Simulates the system, perturbing states `x_2..x_T` by uniform noise of
/// half-width `spec.noise` drawn from `seed`.
pub fn synthesize(spec: &SystemSpec, seed: u64) -> Result<Synthetic> {
    let a = spec.a.to_matrix("A")?;
    let x = spec.x.to_vector();
    let c = observation_matrix(spec)?;
    if c.ncols() != x.len() {
        bail!("field `C`: has {} columns but `x` has length {}", c.ncols(), x.len());
    }
    let clean = simulate_full(&a, &x, spec.horizon)?;
    let trajectory = match spec.noise {
        Some(w) if w < 0.0 || !w.is_finite() => bail!("field `noise`: must be finite and >= 0, got {w}"),
        Some(w) if w > 0.0 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut states = clean.into_states();
            for s in states.iter_mut().skip(1) {
                s.apply(|v| *v += rng.random_range(-w..=w));
            }
            Trajectory::new(states)?
        }
        _ => clean,
    };
    let ys = trajectory.states()[1..].iter().map(|s| &c * s).collect();
    let observed = ObservedData::new(x, c, ys)?;
    Ok(Synthetic { trajectory, observed })
}

/// Writes `trajectory.csv`, `observations.csv` and `observations.json` into `dir`.
pub fn write_files(dir: &Path, data: &Synthetic) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let traj_path = dir.join("trajectory.csv");
    io::save_trajectory(&traj_path, &data.trajectory)
        .with_context(|| format!("cannot write {}", traj_path.display()))?;
    io::save_observed(&dir.join("observations.csv"), &dir.join("observations.json"), &data.observed)
        .with_context(|| format!("cannot write observations into {}", dir.display()))?;
    Ok(())
}
