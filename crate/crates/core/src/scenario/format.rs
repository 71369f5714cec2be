//! Scenario files: a TOML document with run-length-encoded grid rows.
//!
//! ```toml
//! format_version = 1
//! id = "scn-000007"
//! grid_size = 100
//! cell_size = 0.25
//! class_names = ["door", "fridge", ...]
//! start = [12, 40]
//! occupancy = ["100#", "1#30.1#67.1#", ...]     # '#' occupied, '.' free
//! region_rows = ["100*-", "1*- 30*0 1*- 67*1 1*-", ...]
//!
//! [target]
//! class = "bed"
//! instance = 0
//!
//! [[regions]]
//! id = 0
//! category = "kitchen"
//!
//! [[objects]]
//! class = "door"
//! x = 31
//! y = 20
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ObjectRef, Region, RoomCategory, Scenario, ScenarioError, SemanticObject};
use crate::grid::{Cell, Grid};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    format_version: u32,
    id: String,
    grid_size: usize,
    cell_size: f64,
    class_names: Vec<String>,
    start: [i32; 2],
    occupancy: Vec<String>,
    region_rows: Vec<String>,
    target: TargetDoc,
    regions: Vec<RegionDoc>,
    objects: Vec<ObjectDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetDoc {
    class: String,
    instance: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionDoc {
    id: u32,
    category: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectDoc {
    class: String,
    x: i32,
    y: i32,
}

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        location: location.into(),
        message: message.into(),
    }
}

fn encode_runs<T: PartialEq + Copy>(row: &[T], mut token: impl FnMut(usize, T) -> String) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < row.len() {
        let v = row[i];
        let mut j = i + 1;
        while j < row.len() && row[j] == v {
            j += 1;
        }
        out.push_str(&token(j - i, v));
        i = j;
    }
    out
}

fn encode_occupancy_row(row: &[bool]) -> String {
    encode_runs(row, |n, occ| format!("{n}{}", if occ { '#' } else { '.' }))
}

fn decode_occupancy_row(s: &str, width: usize, field: &str) -> Result<Vec<bool>, ScenarioError> {
    let mut out = Vec::with_capacity(width);
    let mut num = String::new();
    for ch in s.chars() {
        match ch {
            '0'..='9' => num.push(ch),
            '#' | '.' => {
                let n: usize = num
                    .parse()
                    .map_err(|_| parse_err(field, format!("missing run length before {ch:?}")))?;
                out.extend(std::iter::repeat(ch == '#').take(n));
                num.clear();
            }
            _ => return Err(parse_err(field, format!("unexpected character {ch:?}"))),
        }
    }
    if !num.is_empty() {
        return Err(parse_err(field, "trailing run length without a cell symbol"));
    }
    if out.len() != width {
        return Err(parse_err(field, format!("row has {} cells, expected {width}", out.len())));
    }
    Ok(out)
}

fn encode_region_row(row: &[Option<u32>]) -> String {
    let mut tokens = Vec::new();
    encode_runs(row, |n, r| {
        tokens.push(match r {
            Some(id) => format!("{n}*{id}"),
            None => format!("{n}*-"),
        });
        String::new()
    });
    tokens.join(" ")
}

fn decode_region_row(s: &str, width: usize, field: &str) -> Result<Vec<Option<u32>>, ScenarioError> {
    let mut out = Vec::with_capacity(width);
    for tok in s.split_whitespace() {
        let (n, label) = tok
            .split_once('*')
            .ok_or_else(|| parse_err(field, format!("malformed run {tok:?}")))?;
        let n: usize = n
            .parse()
            .map_err(|_| parse_err(field, format!("bad run length in {tok:?}")))?;
        let v = match label {
            "-" => None,
            id => Some(
                id.parse()
                    .map_err(|_| parse_err(field, format!("bad region id in {tok:?}")))?,
            ),
        };
        out.extend(std::iter::repeat(v).take(n));
    }
    if out.len() != width {
        return Err(parse_err(field, format!("row has {} cells, expected {width}", out.len())));
    }
    Ok(out)
}

impl Scenario {
    pub fn to_toml_string(&self) -> String {
        let m = self.grid_size();
        let occupancy = (0..m).map(|y| encode_occupancy_row(self.occupancy.row(y))).collect();
        let mut lookup = Grid::new(m, None);
        for r in &self.regions {
            for &c in &r.cells {
                lookup.set(c, Some(r.id));
            }
        }
        let region_rows = (0..m).map(|y| encode_region_row(lookup.row(y))).collect();
        let doc = ScenarioDoc {
            format_version: FORMAT_VERSION,
            id: self.id.clone(),
            grid_size: m,
            cell_size: self.cell_size,
            class_names: self.class_names.clone(),
            start: [self.start_cell.x, self.start_cell.y],
            occupancy,
            region_rows,
            target: TargetDoc {
                class: self.class_names[self.target.class_index].clone(),
                instance: self.target.instance,
            },
            regions: self
                .regions
                .iter()
                .map(|r| RegionDoc {
                    id: r.id,
                    category: r.category.as_str().into(),
                })
                .collect(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectDoc {
                    class: self.class_names[o.class_index].clone(),
                    x: o.position.x,
                    y: o.position.y,
                })
                .collect(),
        };
        toml::to_string(&doc).expect("scenario document always serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let doc: ScenarioDoc = toml::from_str(text).map_err(|e| {
            let location = match e.span() {
                Some(span) => {
                    let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
                    format!("line {line}")
                }
                None => "document".into(),
            };
            parse_err(location, e.message().trim().to_string())
        })?;
        if doc.format_version != FORMAT_VERSION {
            return Err(parse_err(
                "format_version",
                format!("unsupported version {}", doc.format_version),
            ));
        }
        let m = doc.grid_size;
        if doc.occupancy.len() != m {
            return Err(parse_err("occupancy", format!("{} rows, expected {m}", doc.occupancy.len())));
        }
        if doc.region_rows.len() != m {
            return Err(parse_err(
                "region_rows",
                format!("{} rows, expected {m}", doc.region_rows.len()),
            ));
        }
        let mut occ = Vec::with_capacity(m * m);
        for (y, row) in doc.occupancy.iter().enumerate() {
            occ.extend(decode_occupancy_row(row, m, &format!("occupancy[{y}]"))?);
        }
        let occupancy = Grid::from_vec(m, occ);

        let class_of = |name: &str| doc.class_names.iter().position(|n| n == name);
        let mut regions = Vec::with_capacity(doc.regions.len());
        for (i, r) in doc.regions.iter().enumerate() {
            let category = RoomCategory::parse(&r.category).ok_or_else(|| {
                parse_err(format!("regions[{i}].category"), format!("unknown category {:?}", r.category))
            })?;
            regions.push(Region {
                id: r.id,
                category,
                cells: Vec::new(),
            });
        }
        for (y, row) in doc.region_rows.iter().enumerate() {
            let field = format!("region_rows[{y}]");
            for (x, label) in decode_region_row(row, m, &field)?.into_iter().enumerate() {
                if let Some(id) = label {
                    let r = regions.iter_mut().find(|r| r.id == id).ok_or_else(|| {
                        ScenarioError::Validation(format!("{field} references undeclared region {id}"))
                    })?;
                    r.cells.push(Cell::new(x as i32, y as i32));
                }
            }
        }
        let mut objects = Vec::with_capacity(doc.objects.len());
        for (i, o) in doc.objects.iter().enumerate() {
            let class_index = class_of(&o.class).ok_or_else(|| {
                ScenarioError::Validation(format!("objects[{i}] has unknown class name {:?}", o.class))
            })?;
            objects.push(SemanticObject {
                position: Cell::new(o.x, o.y),
                class_index,
            });
        }
        let target_class = class_of(&doc.target.class).ok_or_else(|| {
            ScenarioError::Validation(format!("target has unknown class name {:?}", doc.target.class))
        })?;
        Scenario::new(
            doc.id,
            doc.cell_size,
            occupancy,
            regions,
            objects,
            Cell::new(doc.start[0], doc.start[1]),
            ObjectRef {
                class_index: target_class,
                instance: doc.target.instance,
            },
            doc.class_names,
        )
    }
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    std::fs::write(path, s.to_toml_string())?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

/// Loads every `.toml` file in `dir`, ordered by file name.
pub fn load_scenario_dir(dir: impl AsRef<Path>) -> Result<Vec<Scenario>, ScenarioError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(load_scenario).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::open_room;

    #[test]
    fn occupancy_rle_round_trip() {
        let row = [true, true, false, false, false, true];
        let s = encode_occupancy_row(&row);
        assert_eq!(s, "2#3.1#");
        assert_eq!(decode_occupancy_row(&s, 6, "r").unwrap(), row);
    }

    #[test]
    fn region_rle_round_trip() {
        let row = [None, Some(3), Some(3), None, Some(12)];
        let s = encode_region_row(&row);
        assert_eq!(s, "1*- 2*3 1*- 1*12");
        assert_eq!(decode_region_row(&s, 5, "r").unwrap(), row);
    }

    #[test]
    fn short_row_reports_field() {
        let err = decode_occupancy_row("3#", 5, "occupancy[4]").unwrap_err();
        assert!(err.to_string().contains("occupancy[4]"), "{err}");
    }

    #[test]
    fn unknown_class_is_a_validation_error() {
        let s = open_room(8, Cell::new(2, 2), Cell::new(5, 5));
        let text = s.to_toml_string().replace("class = \"bed\"\nx = 5", "class = \"unicorn\"\nx = 5");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(matches!(err, ScenarioError::Validation(_)), "{err}");
        assert!(err.to_string().contains("unknown class name"));
    }

    #[test]
    fn syntax_error_carries_line() {
        let s = open_room(8, Cell::new(2, 2), Cell::new(5, 5));
        let text = s.to_toml_string().replace("grid_size = 8", "grid_size = ");
        let err = Scenario::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
