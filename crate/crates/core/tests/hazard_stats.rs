use std::collections::BTreeMap;

use evacsim_core::hazard::{ignite_random_room, HazardField, HazardParams};
use evacsim_core::rng::{stream, Stream};
use evacsim_core::{parse_blueprint, Cell};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn fire_front_advances_half_a_cell_per_step() {
    // One burning cell at the west end of a long corridor. With p = 0.5 and
    // dt = 1 the single front cell ignites its east neighbour with
    // probability 0.5 each step, so the front advances 0.5 cells per step.
    let map = parse_blueprint(&format!("{w}\n#P{f}E\n{w}\n", w = "#".repeat(103), f = ".".repeat(100)))
        .unwrap();
    let params = HazardParams {
        p_spread: 0.5,
        smoke_emission: 0.0,
        ..Default::default()
    };
    let steps = 40;
    let mut total = 0.0;
    let seeds = 1000;
    for seed in 0..seeds {
        let mut rng = stream(seed, Stream::Fire);
        let mut f = HazardField::clear(&map);
        f.ignite(&map, Cell::new(1, 1));
        for _ in 0..steps {
            f = f.step_fire(&map, &params, 1.0, &mut rng);
        }
        let front = f.burning_cells(&map).map(|c| c.x).max().unwrap();
        total += (front - 1) as f64 / steps as f64;
    }
    let mean = total / seeds as f64;
    assert!((mean - 0.5).abs() <= 0.025, "front advance {mean}");
}

#[test]
fn ignition_room_choice_is_uniform() {
    let text = "#########\n#..#..#PE\n#########\n---\n\
        [[rooms]]\nname = \"left\"\nmin = [1, 1]\nmax = [2, 1]\n\n\
        [[rooms]]\nname = \"right\"\nmin = [4, 1]\nmax = [5, 1]\n";
    let map = parse_blueprint(text).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let draws = 10_000;
    for _ in 0..draws {
        let f = ignite_random_room(&map, &mut rng, 0).unwrap();
        *counts.entry(f.ignition_room.unwrap()).or_default() += 1;
    }
    let left = counts["left"] as f64 / draws as f64;
    assert!((left - 0.5).abs() <= 0.02, "left share {left}");
    // Chi-square with one degree of freedom at the 0.1% level.
    let e = draws as f64 / 2.0;
    let chi2: f64 = counts.values().map(|&o| (o as f64 - e).powi(2) / e).sum();
    assert!(chi2 < 10.83, "chi2 {chi2}");
}

fn room_map() -> evacsim_core::GridMap {
    parse_blueprint(
        "##########\n#........#\n#..##....#\n#........E\n#....#...#\n#P.......#\n##########\n",
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hazard_invariants_hold(seed in any::<u64>(), x in 1i32..9, y in 1i32..6, emission in 0.0f64..0.5, diffusion in 0.0f64..1.0) {
        let map = room_map();
        let params = HazardParams { smoke_emission: emission, smoke_diffusion: diffusion, p_spread: 0.2, ..Default::default() };
        let mut rng = stream(seed, Stream::Fire);
        let mut f = HazardField::clear(&map);
        f.ignite(&map, Cell::new(x, y));
        for _ in 0..200 {
            let next = f.step_fire(&map, &params, 0.05, &mut rng).step_smoke(&map, &params, 0.05);
            for i in 0..map.len() {
                prop_assert!(!f.burning_mask()[i] || next.burning_mask()[i]);
                prop_assert!((0.0..=1.0).contains(&next.smoke()[i]));
            }
            f = next;
        }
    }

    #[test]
    fn smoke_without_emission_never_grows(seed in any::<u64>(), diffusion in 0.0f64..1.0) {
        let map = room_map();
        let params = HazardParams { smoke_emission: 0.0, smoke_diffusion: diffusion, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = HazardField::clear(&map);
        for c in map.all_cells() {
            f.set_smoke(&map, c, rand::Rng::random::<f64>(&mut rng));
        }
        f.ignite(&map, Cell::new(2, 1));
        let mut total = f.total_smoke();
        for _ in 0..200 {
            f = f.step_smoke(&map, &params, 0.05);
            let now = f.total_smoke();
            prop_assert!(now <= total + 1e-9, "{} > {}", now, total);
            total = now;
        }
    }
}
