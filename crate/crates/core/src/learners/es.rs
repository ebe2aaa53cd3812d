use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::game::Action;
use crate::policy::{SoftmaxTabularPolicy, TabularDeterministicPolicy};

use super::LearnerHyper;

pub trait Mutate: Clone {
    fn mutate<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Self;
}

/// Flips each action independently with probability `scale`.
impl Mutate for TabularDeterministicPolicy {
    fn mutate<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Self {
        let actions = self
            .actions()
            .iter()
            .map(|&a| {
                if rng.random::<f64>() < scale {
                    Action::from_bit(!a.is_defect())
                } else {
                    a
                }
            })
            .collect();
        TabularDeterministicPolicy::new(actions)
    }
}

/// Adds Gaussian noise with stddev `scale` to every logit.
impl Mutate for SoftmaxTabularPolicy {
    fn mutate<R: Rng + ?Sized>(&self, scale: f64, rng: &mut R) -> Self {
        let mut out = self.clone();
        if scale > 0.0 {
            let normal = Normal::new(0.0, scale).expect("scale is positive");
            for row in &mut out.logits {
                row[0] += normal.sample(rng);
                row[1] += normal.sample(rng);
            }
        }
        out
    }
}

/// One generation of elitist evolution.
///
/// Only whole-policy fitness is read: one scalar per member. The top
/// `elite_fraction` survive unchanged (ties broken uniformly at random) and
/// the rest of the next generation are mutated copies of the elites.
pub fn es_update<G: Mutate, R: Rng + ?Sized>(
    population: &[G],
    fitness: &[f64],
    hyper: &LearnerHyper,
    rng: &mut R,
) -> Result<Vec<G>> {
    if population.is_empty() {
        return Err(Error::Empty("population"));
    }
    if population.len() != fitness.len() {
        return Err(Error::InvalidArgument(format!(
            "{} fitness values for {} members",
            fitness.len(),
            population.len()
        )));
    }
    let n = population.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    let k = ((hyper.elite_fraction * n as f64).round() as usize).clamp(1, n);
    let elites: Vec<&G> = order[..k].iter().map(|&i| &population[i]).collect();
    let mut next: Vec<G> = elites.iter().map(|g| (*g).clone()).collect();
    for i in 0..n - k {
        next.push(elites[i % k].mutate(hyper.noise_std, rng));
    }
    Ok(next)
}
