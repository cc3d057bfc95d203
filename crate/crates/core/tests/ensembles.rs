//! Exhaustive ensemble enumeration on synthetic corpora.

use actionbench::fusion::binomial;
use actionbench::{corpus_metrics, default_taxonomy, enumerate_ensembles, ActionVector, EnsembleOptions, Exact, ModelRun};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

fn random_vector(rng: &mut StdRng) -> ActionVector {
    let bits = (0..21).map(|_| u8::from(rng.gen_bool(0.3))).collect();
    default_taxonomy().vector_from_bits(bits).unwrap()
}

fn noisy(v: &ActionVector, flips: usize, rng: &mut StdRng) -> ActionVector {
    let mut bits = v.bits().to_vec();
    for _ in 0..flips {
        let i = rng.gen_range(0..bits.len());
        bits[i] ^= 1;
    }
    default_taxonomy().vector_from_bits(bits).unwrap()
}

fn manual(rng: &mut StdRng, n: u64) -> ModelRun {
    ModelRun::from_vectors("Manual", &default_taxonomy(), (1..=n).map(|id| (id, random_vector(rng))))
}

#[test]
fn six_models_give_binomial_counts() {
    let mut rng = StdRng::seed_from_u64(6);
    let t = default_taxonomy();
    let manual = manual(&mut rng, 200);
    let runs: Vec<ModelRun> = (0..6)
        .map(|j| {
            let vs = manual.vectors.iter().map(|(id, v)| (*id, noisy(v, j + 1, &mut rng)));
            ModelRun::from_vectors(format!("model-{j}"), &t, vs.collect::<Vec<_>>())
        })
        .collect();
    let refs: Vec<&ModelRun> = runs.iter().collect();
    let sizes = enumerate_ensembles(&refs, &manual, &EnsembleOptions::default()).unwrap();
    let counts: Vec<usize> = sizes.iter().map(|s| s.n_combinations).collect();
    assert_eq!(counts, [6, 15, 20, 15, 6, 1]);
    assert_eq!(counts.iter().sum::<usize>(), 63);
    for s in &sizes {
        assert_eq!(s.n_combinations, binomial(6, s.size));
        assert_eq!(s.distribution.len(), s.n_combinations);
        let best = s.best.as_ref().unwrap();
        assert!(best.stat.mean_similarity <= Exact::from_integer(1));
        assert_eq!(best.per_incident_similarity.len(), 200);
    }
}

#[test]
fn best_pair_is_the_two_good_models() {
    let mut rng = StdRng::seed_from_u64(42);
    let t = default_taxonomy();
    let manual = manual(&mut rng, 60);
    let mut runs = Vec::new();
    for name in ["A", "B"] {
        let vs: Vec<_> = manual.vectors.iter().map(|(id, v)| (*id, v.clone())).collect();
        runs.push(ModelRun::from_vectors(name, &t, vs));
    }
    for name in ["C", "D"] {
        let vs: Vec<_> = manual.vectors.keys().map(|id| (*id, random_vector(&mut rng))).collect();
        runs.push(ModelRun::from_vectors(name, &t, vs));
    }
    let refs: Vec<&ModelRun> = runs.iter().collect();
    let sizes = enumerate_ensembles(&refs, &manual, &EnsembleOptions::default()).unwrap();
    let pairs = &sizes[1];
    assert_eq!(pairs.best.as_ref().unwrap().stat.members, ["A", "B"]);

    // exhaustive oracle: the pair with the smallest total hamming
    let mut oracle: Vec<(u64, [&str; 2])> = Vec::new();
    for (i, a) in runs.iter().enumerate() {
        for b in &runs[i + 1..] {
            let mut total = 0u64;
            for (id, reference) in &manual.vectors {
                let (x, y) = (a.vector(*id).unwrap(), b.vector(*id).unwrap());
                for k in 0..21 {
                    // with two voters the strict majority needs both
                    let voted = x.get(k) == Some(1) && y.get(k) == Some(1);
                    total += u64::from(u8::from(voted) != reference.get(k).unwrap());
                }
            }
            oracle.push((total, [&a.model_name, &b.model_name]));
        }
    }
    oracle.sort();
    assert_eq!(oracle[0].1, ["A", "B"]);
    assert_eq!(oracle[0].0, 0);
}

#[test]
fn singletons_match_corpus_metrics() {
    let mut rng = StdRng::seed_from_u64(7);
    let t = default_taxonomy();
    let manual = manual(&mut rng, 50);
    let runs: Vec<ModelRun> = (0..3)
        .map(|j| {
            let vs: Vec<_> = manual
                .vectors
                .iter()
                .filter(|(id, _)| **id % (j + 3) != 0)
                .map(|(id, v)| (*id, noisy(v, 3, &mut rng)))
                .collect();
            ModelRun::from_vectors(format!("m{j}"), &t, vs)
        })
        .collect();
    let refs: Vec<&ModelRun> = runs.iter().collect();
    let sizes = enumerate_ensembles(&refs, &manual, &EnsembleOptions::default()).unwrap();
    for stat in &sizes[0].distribution {
        let run = runs.iter().find(|r| r.model_name == stat.members[0]).unwrap();
        let cm = corpus_metrics(run, &manual).unwrap();
        assert_eq!(stat.mean_similarity, cm.mean_similarity);
        assert_eq!(stat.n_incidents, cm.n_scored);
        assert_eq!(stat.mean_fp, cm.mean_fp);
        assert_eq!(stat.mean_fn, cm.mean_fn);
    }
}
