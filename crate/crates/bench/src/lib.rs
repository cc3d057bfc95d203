//! Seeded synthetic data for the criterion benches.

use actionbench::{default_taxonomy, ActionVector, ModelRun};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn random_vector(rng: &mut StdRng) -> ActionVector {
    let bits = (0..21).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    default_taxonomy().vector_from_bits(bits).expect("21 binary bits")
}

/// A manual reference over `incidents` incidents and `models` runs that
/// each flip a few of its bits.
pub fn synthetic(models: usize, incidents: u64, seed: u64) -> (ModelRun, Vec<ModelRun>) {
    let t = default_taxonomy();
    let mut rng = StdRng::seed_from_u64(seed);
    let manual = ModelRun::from_vectors("Manual", &t, (0..incidents).map(|id| (id, random_vector(&mut rng))));
    let runs = (0..models)
        .map(|j| {
            let vectors: Vec<(u64, ActionVector)> = manual
                .vectors
                .iter()
                .map(|(id, v)| {
                    let mut bits = v.bits().to_vec();
                    for _ in 0..=j % 4 {
                        bits[rng.gen_range(0..21)] ^= 1;
                    }
                    (*id, t.vector_from_bits(bits).expect("21 binary bits"))
                })
                .collect();
            ModelRun::from_vectors(format!("model-{j:02}"), &t, vectors)
        })
        .collect();
    (manual, runs)
}
