use neuroarm_models::forest::{train_forest, ForestConfig, Node};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn threshold_set(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.gen_range(-1.0..1.0);
            (vec![x], usize::from(x > 0.2))
        })
        .unzip()
}

#[test]
fn separates_a_one_dimensional_threshold() {
    let (xs, ys) = threshold_set(200, 1);
    let f = train_forest(&xs, &ys, 2, &ForestConfig::default()).unwrap();
    assert_eq!(f.trees.len(), 100);
    let correct = xs.iter().zip(&ys).filter(|(x, &y)| f.predict(x).unwrap().imax() == y).count();
    assert_eq!(correct, 200);
}

#[test]
fn single_class_gives_certainty() {
    let xs: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * 7 % 5) as f64]).collect();
    let ys = vec![2; 30];
    let f = train_forest(&xs, &ys, 3, &ForestConfig { n_trees: 10, ..Default::default() }).unwrap();
    for t in &f.trees {
        assert_eq!(t.nodes.len(), 1);
    }
    let p = f.predict(&[100.0, -3.0]).unwrap();
    assert_eq!(p.as_slice(), &[0.0, 0.0, 1.0]);
}

#[test]
fn trees_are_well_formed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs: Vec<Vec<f64>> = (0..150).map(|_| (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let ys: Vec<usize> = xs.iter().map(|x| usize::from(x[0] + x[3] > 0.0) + usize::from(x[1] > 0.5)).collect();
    let cfg = ForestConfig { n_trees: 20, max_depth: 6, ..Default::default() };
    let f = train_forest(&xs, &ys, 3, &cfg).unwrap();
    for t in &f.trees {
        assert!(t.depth() <= 6);
        // Every row of the bootstrap reaches exactly one leaf, so leaf
        // totals add up to the training-set size.
        let mut leaf_total = 0;
        for (i, n) in t.nodes.iter().enumerate() {
            match n {
                Node::Split { left, right, .. } => assert!(*left > i && *right > i),
                Node::Leaf { counts } => {
                    let n: u32 = counts.iter().sum();
                    assert!(n > 0);
                    leaf_total += n;
                }
            }
        }
        assert_eq!(leaf_total as usize, xs.len());
    }
}

#[test]
fn seeded_and_validated() {
    let (xs, ys) = threshold_set(50, 2);
    let cfg = ForestConfig { n_trees: 5, ..Default::default() };
    assert_eq!(train_forest(&xs, &ys, 2, &cfg).unwrap(), train_forest(&xs, &ys, 2, &cfg).unwrap());
    let f = train_forest(&xs, &ys, 2, &cfg).unwrap();
    assert!(f.predict(&[0.0, 1.0]).is_err());
    assert!(train_forest(&xs, &ys[..10], 2, &cfg).is_err());
    assert!(train_forest(&xs, &vec![4; 50], 2, &cfg).is_err());
    assert!(train_forest(&[], &[], 2, &cfg).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn votes_form_a_distribution(seed in 0u64..500, q in prop::collection::vec(-2.0f64..2.0, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<usize> = (0..40).map(|_| rng.gen_range(0..3)).collect();
        let f = train_forest(&xs, &ys, 3, &ForestConfig { n_trees: 7, seed, ..Default::default() }).unwrap();
        let p = f.predict(&q).unwrap();
        prop_assert!((p.sum() - 1.0).abs() < 1e-6);
        prop_assert!(p.iter().all(|&v| v >= 0.0));
    }
}
