//! Generates a floorplan and prints it as ASCII with room categories.
//!
//! `cargo run --example generate_floorplan -- [seed]`

use semsearch::grid::Cell;
use semsearch::scenario::{category_counts, generate_scenario, GeneratorConfig, RoomCategory};

fn main() {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let gen = GeneratorConfig {
        grid_size: 60,
        min_room_side: 9,
        ..GeneratorConfig::default()
    };
    let s = generate_scenario(seed, &gen).expect("generator settles");
    let m = s.grid_size() as i32;
    for y in 0..m {
        let row: String = (0..m)
            .map(|x| {
                let c = Cell::new(x, y);
                if c == s.start_cell {
                    return 'S';
                }
                if c == s.target_object().position {
                    return 'T';
                }
                if s.objects.iter().any(|o| o.position == c) {
                    return 'o';
                }
                if !s.is_free(c) {
                    return '#';
                }
                match s.region_at(c).and_then(|r| s.region(r)).map(|r| r.category) {
                    Some(RoomCategory::Kitchen) => 'k',
                    Some(RoomCategory::Bathroom) => 'b',
                    Some(RoomCategory::LivingRoom) => 'l',
                    Some(RoomCategory::Bedroom) => 'B',
                    Some(RoomCategory::Corridor) => 'c',
                    None => '.',
                }
            })
            .collect();
        println!("{row}");
    }
    println!("{} with {} objects, rooms {:?}", s.id, s.objects.len(), category_counts(&s));
    println!("{}", s.to_toml_string().lines().take(6).collect::<Vec<_>>().join("\n"));
}
