#![allow(dead_code)]

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use randcrf::gumbel_crf::{CandidateSet, Provenance};
use randcrf::spaces::{OutputSpace, StructuredInput};
use randcrf::{Dataset, Sample, WeightVector};

pub fn random_weights<R: Rng>(rng: &mut R, d: usize, sd: f64) -> WeightVector {
    let normal = Normal::new(0.0, sd).unwrap();
    WeightVector::new((0..d).map(|_| normal.sample(rng)).collect())
}

pub fn random_input<R: Rng>(rng: &mut R, len: usize) -> StructuredInput {
    StructuredInput::new((0..len).map(|_| rng.random_bool(0.5)).collect())
}

/// Dataset with uniformly random labels (not necessarily MAP outputs).
pub fn random_dataset<R: Rng>(rng: &mut R, space: &OutputSpace, m: usize) -> Dataset {
    let family = *space.family();
    let samples = (0..m)
        .map(|_| Sample {
            x: random_input(rng, family.input_len()),
            y: space.output(rng.random_range(0..space.len())).clone(),
        })
        .collect();
    Dataset::new(family, samples).unwrap()
}

/// Random set of `size` outputs that always contains `must`.
pub fn random_set_with<R: Rng>(rng: &mut R, space: &OutputSpace, size: usize, must: usize) -> CandidateSet {
    let mut members: Vec<u32> = sample_indices(rng, space.len(), size.min(space.len()))
        .into_iter()
        .map(|i| i as u32)
        .collect();
    if !members.contains(&(must as u32)) {
        members.push(must as u32);
    }
    members.sort_unstable();
    CandidateSet::from_members(members, Provenance::SampledAugmented).unwrap()
}

pub fn random_sets<R: Rng>(rng: &mut R, space: &OutputSpace, data: &Dataset, max_size: usize) -> Vec<CandidateSet> {
    data.observed_indices(space)
        .unwrap()
        .into_iter()
        .map(|y| {
            let size = rng.random_range(1..=max_size);
            random_set_with(rng, space, size, y)
        })
        .collect()
}
/// (d, s, m, n, r, delta, l1, eps, eps1, eps2) re-evaluated at 50 significant digits.
pub const BOUND_GRID: [(usize, usize, usize, usize, usize, f64, f64, f64, f64, f64); 20] = [
    (105, 11, 100, 10, 1365, 0.05, 0.0, 3.9363017842613635335, 0.090909090909090909091, 4.6050537683730333798),
    (105, 11, 25, 5, 1365, 0.05, 1.5, 7.5179926618890750157, 0.46666666666666666667, 8.8936157853507747591),
    (105, 11, 400, 20, 1365, 0.01, 3.0, 2.0929858782201909585, 0.19761904761904761905, 2.3949953273293194334),
    (105, 11, 1600, 40, 1365, 0.1, 12.25, 1.0565706279922449732, 0.33064024390243902439, 1.2221567634013480746),
    (15, 4, 100, 10, 7776, 0.05, 0.0, 2.5923235052986736436, 0.090909090909090909091, 2.913710211976725467),
    (15, 4, 30, 6, 7776, 0.2, 2.0, 4.4123914737877095175, 0.51953546046499560901, 5.1191613093417528654),
    (15, 4, 1000, 32, 7776, 0.05, 7.5, 0.87117396013264185077, 0.26782425454434395873, 0.96800835497205569641),
    (15, 15, 100, 10, 7776, 0.05, 0.3, 4.6384576537857141678, 0.12090909090909090909, 5.5141007226013260314),
    (20, 5, 100, 10, 13956, 0.05, 0.0, 2.9091659423444685582, 0.090909090909090909091, 3.3256462894534121662),
    (20, 5, 50, 8, 13956, 0.5, 4.0, 3.8119573353218778576, 0.68958476804853343266, 4.5488067294681334468),
    (20, 5, 10000, 100, 13956, 0.001, 20.0, 0.34310237745066404203, 0.20990099009900990099, 0.37108764431125316964),
    (20, 1, 2, 1, 13956, 0.9, 0.1, 8.1915721580328196644, 0.48492424049174980124, 9.2357463490919124696),
    (28, 6, 100, 10, 56, 0.05, 1.0, 2.6305767799264456401, 0.19090909090909090909, 2.8767211895533386386),
    (28, 6, 7, 3, 56, 0.05, 0.0, 8.7766886461987378436, 0.27429188517743176508, 9.8861591321210093083),
    (1, 1, 1, 1, 1, 0.5, 0.0, 2.4976638334730932691, 0.5, 1.177410022515474691),
    (1000, 32, 500, 23, 100000, 0.05, 5.0, 3.4753653640584827524, 0.26641377124696874312, 4.2647266568560595985),
    (45, 7, 200, 15, 1365, 0.025, 9.0, 2.3234162746825567256, 0.70243698559920408095, 2.6329519761611422309),
    (45, 7, 123, 12, 2, 0.3, 0.75, 2.1000381896182842661, 0.15033453822636411977, 2.2440592279475397442),
    (6, 3, 64, 8, 125, 0.05, 2.5, 2.4344253903173276242, 0.42361111111111111111, 2.5612655732453515429),
    (10, 2, 1000000, 1000, 1000, 0.05, 100.0, 0.022782402636955484434, 0.100999000999000999, 0.0234252422625143144),
];
