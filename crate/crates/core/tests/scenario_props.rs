use evacsim_core::hazard::HazardField;
use evacsim_core::{parse_blueprint, Cell, GridMap};
use proptest::prelude::*;

/// A walled map with random interior walls and one exit on the east side.
fn arb_map() -> impl Strategy<Value = GridMap> {
    (4usize..12, 3usize..9)
        .prop_flat_map(|(w, h)| (Just((w, h)), prop::collection::vec(prop::bool::weighted(0.2), w * h)))
        .prop_map(|((w, h), walls)| {
            let mut rows = vec!["#".repeat(w + 2)];
            for y in 0..h {
                let mut row = String::from("#");
                for x in 0..w {
                    row.push(if (x, y) == (0, 0) {
                        'P'
                    } else if walls[y * w + x] {
                        '#'
                    } else {
                        '.'
                    });
                }
                row.push(if y == h / 2 { 'E' } else { '#' });
                rows.push(row);
            }
            rows.push("#".repeat(w + 2));
            parse_blueprint(&(rows.join("\n") + "\n")).unwrap()
        })
}

proptest! {
    #[test]
    fn blueprint_round_trips(map in arb_map()) {
        let again = parse_blueprint(&map.to_blueprint()).unwrap();
        prop_assert_eq!(again, map);
    }

    #[test]
    fn line_of_sight_is_symmetric(map in arb_map(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), smoke in 0.0f64..0.5) {
        let cells: Vec<Cell> = map.all_cells().collect();
        let (p, q) = (cells[a.index(cells.len())], cells[b.index(cells.len())]);
        let field = HazardField::with_uniform_smoke(&map, smoke);
        prop_assert_eq!(
            map.line_of_sight(p, q, &field, 0.5).unwrap(),
            map.line_of_sight(q, p, &field, 0.5).unwrap()
        );
    }

    #[test]
    fn more_smoke_never_restores_sight(map in arb_map(), a in any::<prop::sample::Index>(), b in any::<prop::sample::Index>(), lo in 0.0f64..1.0, extra in 0.0f64..1.0) {
        let cells: Vec<Cell> = map.all_cells().collect();
        let (p, q) = (cells[a.index(cells.len())], cells[b.index(cells.len())]);
        let thin = HazardField::with_uniform_smoke(&map, lo);
        let thick = HazardField::with_uniform_smoke(&map, (lo + extra).min(1.0));
        if map.line_of_sight(p, q, &thick, 0.5).unwrap() {
            prop_assert!(map.line_of_sight(p, q, &thin, 0.5).unwrap());
        }
    }
}
