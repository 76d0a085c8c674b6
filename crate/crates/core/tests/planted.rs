use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dimsel::corpus::Vocabulary;
use dimsel::criteria::{sweep, Criterion, Grid};
use dimsel::evaluation::{oracle_grid_search, SimilarityBenchmark};
use dimsel::postprocess::PostprocConfig;
use dimsel::spectral::truncated_svd;
use dimsel::synthetic::{planted_symmetric, random_orthonormal, PlantedSpec};

const SPEC: PlantedSpec = PlantedSpec { n: 600, rank: 50, top: 10.0, bottom: 9.0, noise: 0.05 };

fn grid() -> Grid {
    Grid::new(5, 150, 5)
}

#[test]
fn mpd_and_pip_find_a_flat_planted_rank() {
    for seed in [1, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = random_orthonormal(SPEC.n, SPEC.rank, &mut rng);
        let a = planted_symmetric(&basis, &SPEC, &mut rng);
        let b = planted_symmetric(&basis, &SPEC, &mut rng);
        let da = truncated_svd(&a, grid().max, 0).unwrap();
        let db = truncated_svd(&b, grid().max, 0).unwrap();
        let trace = sweep(&da, &db, &grid(), 0.5, &PostprocConfig::default()).unwrap();
        for criterion in [Criterion::Mpd, Criterion::Pip] {
            let k = trace.select(criterion).unwrap();
            assert!((25..=100).contains(&k), "seed {seed}: {criterion} picked {k}");
        }
    }
}

#[test]
fn similarity_peaks_near_the_planted_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let basis = random_orthonormal(SPEC.n, SPEC.rank, &mut rng);
    let noisy = planted_symmetric(&basis, &SPEC, &mut rng);

    // Human scores are cosines of the noiseless oracle embedding.
    let scale = DVector::from_iterator(SPEC.rank, SPEC.planted_values().into_iter().map(f64::sqrt));
    let clean: DMatrix<f64> = &basis * DMatrix::from_diagonal(&scale);
    let cosine = |i: usize, j: usize| {
        let (u, v) = (clean.row(i), clean.row(j));
        u.dot(&v) / (u.norm() * v.norm())
    };
    let word = |i: usize| format!("w{i}");
    let pairs = (0..400)
        .map(|_| {
            let i = rng.gen_range(0..SPEC.n);
            let j = (i + rng.gen_range(1..SPEC.n)) % SPEC.n;
            (word(i), word(j), cosine(i, j))
        })
        .collect();
    let bench = SimilarityBenchmark::new("planted", pairs).unwrap();
    let vocab = Vocabulary::from_entries((0..SPEC.n).map(|i| (word(i), (SPEC.n - i) as u64)).collect()).unwrap();

    let decomp = truncated_svd(&noisy, grid().max, 0).unwrap();
    let result = oracle_grid_search(&decomp, &vocab, &bench, &grid(), 0.5).unwrap();
    assert!((25..=100).contains(&result.k_plus), "k+ = {}", result.k_plus);
    assert!(result.max_rho() > result.rho_at(150).unwrap());
    assert!(result.max_rho() > result.rho_at(10).unwrap());
}
