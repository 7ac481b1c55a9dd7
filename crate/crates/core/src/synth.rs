//! Synthetic fractional solutions with coarse values, for experiments that
//! need a rich support graph without going through the LP.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::lp::{Dims, FractionalSolution};
use crate::preprocess::{duplicate_facilities, PreprocessError, PreprocessedSolution};

/// A random distribution over facilities with values in multiples of
/// `1/grid`.
fn random_row(rng: &mut ChaCha8Rng, num_facilities: usize, grid: usize) -> Vec<f64> {
    let support = rng.random_range(1..=num_facilities.min(grid));
    let chosen = sample(rng, num_facilities, support).into_vec();
    // Random composition of `grid` units into `support` positive parts.
    let mut cuts: Vec<usize> = sample(rng, grid - 1, support - 1)
        .into_iter()
        .map(|c| c + 1)
        .collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(grid);
    let mut row = vec![0.0; num_facilities];
    for (k, &i) in chosen.iter().enumerate() {
        row[i] = (cuts[k + 1] - cuts[k]) as f64 / grid as f64;
    }
    row
}

fn fill_openings_and_switching(frac: &mut FractionalSolution) {
    let Dims {
        facilities: nf,
        clients: nc,
        horizon,
    } = frac.dims;
    for t in 0..horizon {
        for i in 0..nf {
            let y = (0..nc).map(|j| frac.x(i, j, t)).fold(0.0, f64::max);
            frac.set_y(i, t, y);
            if t + 1 < horizon {
                for j in 0..nc {
                    let d = frac.x(i, j, t) - frac.x(i, j, t + 1);
                    frac.set_z(i, j, t, d.max(0.0));
                }
            }
        }
    }
}

/// Feasible `(x, y, z)` whose rows take values in multiples of `1/grid`. At
/// each step after the first, every client's row is redrawn with probability
/// `change_prob` and kept otherwise; `y` is the smallest feasible opening.
pub fn random_fractional(
    num_facilities: usize,
    num_clients: usize,
    horizon: usize,
    change_prob: f64,
    grid: usize,
    seed: u64,
) -> FractionalSolution {
    assert!(num_facilities > 0 && num_clients > 0 && horizon > 0 && grid > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = Dims {
        facilities: num_facilities,
        clients: num_clients,
        horizon,
    };
    let mut frac = FractionalSolution::zeros(dims);
    for j in 0..num_clients {
        let mut row = random_row(&mut rng, num_facilities, grid);
        for t in 0..horizon {
            if t > 0 && rng.random::<f64>() < change_prob {
                row = random_row(&mut rng, num_facilities, grid);
            }
            for (i, &v) in row.iter().enumerate() {
                frac.set_x(i, j, t, v);
            }
        }
    }
    fill_openings_and_switching(&mut frac);
    frac
}

/// [`random_fractional`] followed by facility duplication.
pub fn random_preprocessed(
    num_facilities: usize,
    num_clients: usize,
    horizon: usize,
    change_prob: f64,
    grid: usize,
    seed: u64,
) -> Result<PreprocessedSolution, PreprocessError> {
    duplicate_facilities(&random_fractional(
        num_facilities,
        num_clients,
        horizon,
        change_prob,
        grid,
        seed,
    ))
}

/// Two single-step solutions over the same copies whose connection rows
/// differ for exactly `changed` clients (returned as the third component).
/// Both come from one two-step solution duplicated jointly, so the copies
/// and their opening fractions are shared.
pub fn perturbed_pair(
    num_facilities: usize,
    num_clients: usize,
    changed: usize,
    grid: usize,
    seed: u64,
) -> Result<(PreprocessedSolution, PreprocessedSolution, BTreeSet<usize>), PreprocessError> {
    assert!(changed <= num_clients);
    assert!(num_facilities > 1 || grid > 1, "no alternative rows exist");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frac = random_fractional(num_facilities, num_clients, 1, 0.0, grid, rng.random());
    let dims = Dims {
        facilities: num_facilities,
        clients: num_clients,
        horizon: 2,
    };
    let mut two = FractionalSolution::zeros(dims);
    let set: BTreeSet<usize> = sample(&mut rng, num_clients, changed).into_iter().collect();
    for j in 0..num_clients {
        let before: Vec<f64> = (0..num_facilities).map(|i| frac.x(i, j, 0)).collect();
        let mut after = before.clone();
        if set.contains(&j) {
            while after == before {
                after = random_row(&mut rng, num_facilities, grid);
            }
        }
        for i in 0..num_facilities {
            two.set_x(i, j, 0, before[i]);
            two.set_x(i, j, 1, after[i]);
        }
    }
    fill_openings_and_switching(&mut two);
    frac = two;
    let prep = duplicate_facilities(&frac)?;
    let a = prep.time_slice(0)?;
    let b = prep.time_slice(1)?;
    Ok((a, b, set))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_fractional_is_feasible() {
        for seed in 0..20 {
            let f = random_fractional(3, 6, 4, 0.4, 5, seed);
            assert!(f.is_feasible(1e-12), "seed {seed}");
        }
    }

    #[test]
    fn zero_change_probability_is_time_constant() {
        let f = random_fractional(3, 6, 4, 0.0, 4, 3);
        for t in 1..4 {
            for i in 0..3 {
                for j in 0..6 {
                    assert_eq!(f.x(i, j, t), f.x(i, j, 0));
                }
            }
        }
    }

    #[test]
    fn perturbed_pair_differs_exactly_on_set() {
        for seed in 0..20 {
            let (a, b, k) = perturbed_pair(3, 6, 2, 4, seed).unwrap();
            assert_eq!(k.len(), 2);
            assert_eq!(a.o, b.o);
            let diff: BTreeSet<usize> = (0..6)
                .filter(|&j| a.connections[0][j] != b.connections[0][j])
                .collect();
            assert_eq!(diff, k);
        }
    }
}
