//! Custom system description files: a TOML document with one `[[map]]`
//! table per similitude and an optional `[known]` block carrying exact
//! separation and diameter constants.
//!
//! ```toml
//! [known]
//! c = 0.5
//! R = 1.0
//!
//! [[map]]
//! ratio = 0.25
//! translation = [0.0]
//!
//! [[map]]
//! ratio = 0.25
//! translation = [0.75]
//! ```
//!
//! 2-D maps may carry `rotation_deg`; any dimension may carry `matrix`
//! (row-major orthogonal part). The two are mutually exclusive.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::ifs::{IfSystem, KnownConstants, Similitude};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    known: Option<RawKnown>,
    #[serde(rename = "map", default)]
    maps: Vec<RawMap>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKnown {
    c: f64,
    #[serde(rename = "R")]
    r: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMap {
    ratio: f64,
    rotation_deg: Option<f64>,
    matrix: Option<Vec<f64>>,
    translation: Vec<f64>,
}

pub fn parse_config(text: &str) -> Result<IfSystem> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut maps = Vec::with_capacity(raw.maps.len());
    for (i, m) in raw.maps.iter().enumerate() {
        let dim = m.translation.len();
        if dim == 0 {
            return Err(Error::Config(format!("map {i}: empty translation")));
        }
        let map = match (&m.rotation_deg, &m.matrix) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(format!(
                    "map {i}: rotation_deg and matrix are mutually exclusive"
                )))
            }
            (Some(deg), None) => {
                if dim != 2 {
                    return Err(Error::Config(format!(
                        "map {i}: rotation_deg needs a 2-D translation, got {dim}-D"
                    )));
                }
                Similitude::rotation_2d(m.ratio, *deg, m.translation.clone())
            }
            (None, Some(mat)) => {
                if mat.len() != dim * dim {
                    return Err(Error::Config(format!(
                        "map {i}: matrix has {} entries, expected {}",
                        mat.len(),
                        dim * dim
                    )));
                }
                Similitude {
                    ratio: m.ratio,
                    orthogonal: mat.clone(),
                    translation: m.translation.clone(),
                }
            }
            (None, None) => Similitude::scaling(m.ratio, m.translation.clone()),
        };
        maps.push(map);
    }
    let known = raw.known.map(|k| KnownConstants {
        c_exact: k.c,
        r_exact: k.r,
    });
    IfSystem::new(maps, known)
}

pub fn load_config(path: &Path) -> Result<IfSystem> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::similarity_dimension;

    #[test]
    fn parses_cantor_with_known_constants() {
        let text = r#"
            [known]
            c = 0.5
            R = 1.0

            [[map]]
            ratio = 0.25
            translation = [0.0]

            [[map]]
            ratio = 0.25
            translation = [0.75]
        "#;
        let sys = parse_config(text).unwrap();
        assert_eq!(sys.len(), 2);
        assert_eq!(similarity_dimension(&sys), 0.5);
        assert_eq!(sys.known_constants().unwrap().c_exact, 0.5);
    }

    #[test]
    fn parses_rotation_map() {
        let text = r#"
            [[map]]
            ratio = 0.3
            rotation_deg = 90.0
            translation = [0.0, 0.0]

            [[map]]
            ratio = 0.3
            translation = [0.7, 0.0]
        "#;
        let sys = parse_config(text).unwrap();
        let o = &sys.maps()[0].orthogonal;
        assert!(o[0].abs() < 1e-15 && (o[1] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn reports_toml_error_with_line() {
        let text = "[[map]]\nratio = \"x\"\n";
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
    }

    #[test]
    fn rejects_matrix_length_mismatch() {
        let text = r#"
            [[map]]
            ratio = 0.3
            matrix = [1.0, 0.0]
            translation = [0.0, 0.0]

            [[map]]
            ratio = 0.3
            translation = [0.7, 0.0]
        "#;
        let msg = parse_config(text).unwrap_err().to_string();
        assert!(msg.contains("map 0") && msg.contains("expected 4"), "{msg}");
    }

    #[test]
    fn rejects_rotation_and_matrix_together() {
        let text = r#"
            [[map]]
            ratio = 0.3
            rotation_deg = 10.0
            matrix = [1.0, 0.0, 0.0, 1.0]
            translation = [0.0, 0.0]

            [[map]]
            ratio = 0.3
            translation = [0.7, 0.0]
        "#;
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn rejects_unknown_fields() {
        let text = r#"
            [[map]]
            ratio = 0.3
            translation = [0.0]
            scale = 2.0

            [[map]]
            ratio = 0.3
            translation = [0.7]
        "#;
        assert!(parse_config(text).is_err());
    }
}
