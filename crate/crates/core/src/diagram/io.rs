use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{PersistenceDiagram, PersistencePoint};
use crate::error::{Error, Result};

const HEADER: [&str; 4] = ["degree", "birth", "death", "essential"];

/// Reads every degree present in a diagram CSV, ordered by degree.
pub fn read_diagrams_csv(path: &Path) -> Result<Vec<PersistenceDiagram>> {
    let mut text = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| Error::Read {
            path: path.to_path_buf(),
            source,
        })?;
    parse_diagrams(&text, &path.display().to_string())
}

/// Reads a single-degree diagram. A header-only file yields an empty degree-0 diagram.
pub fn read_diagram_csv(path: &Path) -> Result<PersistenceDiagram> {
    let mut all = read_diagrams_csv(path)?;
    match all.len() {
        0 => Ok(PersistenceDiagram::empty(0)),
        1 => Ok(all.remove(0)),
        n => Err(Error::Parse {
            path: path.display().to_string(),
            line: 1,
            message: format!("expected a single homology degree, found {n}"),
        }),
    }
}

pub(crate) fn parse_diagrams(text: &str, origin: &str) -> Result<Vec<PersistenceDiagram>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{}`", HEADER.join(",")),
        ));
    }

    let mut by_degree: BTreeMap<usize, PersistenceDiagram> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, got {}", record.len())));
        }
        let degree: usize = record[0]
            .parse()
            .map_err(|_| parse_err(line, format!("bad degree {:?}", &record[0])))?;
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| parse_err(line, format!("bad {what} {s:?}")))
        };
        let birth = num(&record[1], "birth")?;
        let death = num(&record[2], "death")?;
        let essential = match &record[3] {
            "true" => true,
            "false" => false,
            other => return Err(parse_err(line, format!("bad essential flag {other:?}"))),
        };
        if death < birth {
            return Err(parse_err(
                line,
                format!("death {death} precedes birth {birth}"),
            ));
        }
        let point = PersistencePoint {
            birth,
            death,
            degree,
            essential,
        };
        by_degree
            .entry(degree)
            .or_insert_with(|| PersistenceDiagram::empty(degree))
            .push(point)
            .map_err(|e| parse_err(line, e.to_string()))?;
    }
    Ok(by_degree.into_values().collect())
}

pub fn write_diagram_csv(pd: &PersistenceDiagram, path: &Path) -> Result<()> {
    write_diagrams_csv(std::slice::from_ref(pd), path)
}

pub fn write_diagrams_csv(pds: &[PersistenceDiagram], path: &Path) -> Result<()> {
    let werr = |source| Error::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut f = File::create(path).map_err(werr)?;
    f.write_all(render(pds).as_bytes()).map_err(werr)
}

pub(crate) fn render(pds: &[PersistenceDiagram]) -> String {
    let mut out = HEADER.join(",");
    out.push('\n');
    for pd in pds {
        for p in pd.points() {
            // f64 Display is the shortest representation that round-trips.
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.degree, p.birth, p.death, p.essential
            ));
        }
    }
    out
}
