//! Versioned TOML document formats for trees, drivers and terminal
//! conditions.
//!
//! Every document carries `schema_version = 1`. A tree document gives
//! either a time-homogeneous `markov_matrix` or explicit per-path
//! `kernel_rows`; a driver document selects a `[builtin]` family or a
//! `[tabular]` interpolation grid; a terminal document lists values either
//! lexicographically (`values_lex`) or keyed by path (`[[values]]`).
//! Parsing failures are reported as [`Error::Document`] with the location
//! information the TOML parser provides.

use serde::{Deserialize, Serialize};

use crate::driver::Driver;
use crate::error::{Error, Result};
use crate::static2dyn::StaticKind;
use crate::tree::{path_label, AdaptedProcess, ScenarioTree};

/// The single supported document schema version.
pub const SCHEMA_VERSION: u32 = 1;

fn check_version(version: u32, what: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(Error::Document(format!(
            "{what}: unsupported schema_version {version}, expected {SCHEMA_VERSION}"
        )));
    }
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Document(format!("{what}: {e}")))
}

/// One explicit kernel row: the distribution of the next state after the
/// given path.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KernelRowDoc {
    /// Full state path including the initial state.
    pub path: Vec<usize>,
    pub row: Vec<f64>,
}

/// Scenario tree document.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TreeDoc {
    pub schema_version: u32,
    pub n_states: usize,
    pub horizon: usize,
    pub initial_state: usize,
    /// Time-homogeneous transition matrix, one row per current state.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub markov_matrix: Option<Vec<Vec<f64>>>,
    /// Per-path kernel rows for inhomogeneous trees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_rows: Option<Vec<KernelRowDoc>>,
}

pub fn parse_tree_doc(text: &str) -> Result<TreeDoc> {
    parse(text, "tree document")
}

/// Instantiates the scenario tree a document describes.
pub fn build_tree(doc: &TreeDoc) -> Result<ScenarioTree> {
    check_version(doc.schema_version, "tree document")?;
    match (&doc.markov_matrix, &doc.kernel_rows) {
        (Some(matrix), None) => {
            ScenarioTree::markov(doc.n_states, doc.horizon, doc.initial_state, matrix)
        }
        (None, Some(rows)) => {
            let pairs: Vec<(Vec<usize>, Vec<f64>)> = rows
                .iter()
                .map(|r| (r.path.clone(), r.row.clone()))
                .collect();
            ScenarioTree::from_kernel_rows(doc.n_states, doc.horizon, doc.initial_state, &pairs)
        }
        (Some(_), Some(_)) => Err(Error::Document(
            "tree document: give markov_matrix or kernel_rows, not both".into(),
        )),
        (None, None) => Err(Error::Document(
            "tree document: one of markov_matrix or kernel_rows is required".into(),
        )),
    }
}

/// Parameters of a shipped driver family.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinDriverDoc {
    /// One of "zero", "linear", "worst_case_tilt", "best_case_tilt".
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub increment_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

/// Parameters of an interpolated scalar driver.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TabularDriverDoc {
    pub n_states: usize,
    pub y_axis: Vec<f64>,
    pub increment_axes: Vec<Vec<f64>>,
    /// Grid values flattened with the last axis fastest.
    pub values: Vec<f64>,
    pub y_independent: bool,
    pub normalized: bool,
}

/// Driver document.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DriverDoc {
    pub schema_version: u32,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinDriverDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularDriverDoc>,
}

pub fn parse_driver_doc(text: &str) -> Result<DriverDoc> {
    parse(text, "driver document")
}

/// Instantiates the driver a document describes.
pub fn build_driver(doc: &DriverDoc) -> Result<Driver> {
    check_version(doc.schema_version, "driver document")?;
    match (&doc.builtin, &doc.tabular) {
        (Some(builtin), None) => match builtin.family.as_str() {
            "zero" => Ok(Driver::zero(doc.dim)),
            "linear" => {
                let y_matrix = builtin
                    .y_matrix
                    .clone()
                    .unwrap_or_else(|| vec![vec![0.0; doc.dim]; doc.dim]);
                let weights = builtin.increment_weights.clone().unwrap_or_default();
                let offset = builtin.offset.clone().unwrap_or_else(|| vec![0.0; doc.dim]);
                Driver::linear(doc.dim, y_matrix, weights, offset)
            }
            "worst_case_tilt" | "best_case_tilt" => {
                let gamma = builtin.gamma.ok_or_else(|| {
                    Error::Document(format!(
                        "driver document: family \"{}\" requires gamma",
                        builtin.family
                    ))
                })?;
                if builtin.family == "worst_case_tilt" {
                    Driver::worst_case_tilt(doc.dim, gamma)
                } else {
                    Driver::best_case_tilt(doc.dim, gamma)
                }
            }
            other => Err(Error::Document(format!(
                "driver document: unknown family \"{other}\"; expected zero, linear, \
                 worst_case_tilt or best_case_tilt"
            ))),
        },
        (None, Some(tabular)) => {
            if doc.dim != 1 {
                return Err(Error::Document(
                    "driver document: tabular drivers are scalar (dim = 1)".into(),
                ));
            }
            Driver::tabular(
                tabular.n_states,
                tabular.y_axis.clone(),
                tabular.increment_axes.clone(),
                tabular.values.clone(),
                tabular.y_independent,
                tabular.normalized,
            )
        }
        (Some(_), Some(_)) => Err(Error::Document(
            "driver document: give builtin or tabular, not both".into(),
        )),
        (None, None) => Err(Error::Document(
            "driver document: one of builtin or tabular is required".into(),
        )),
    }
}

/// One terminal value keyed by its full path.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalValueDoc {
    pub path: Vec<usize>,
    pub value: Vec<f64>,
}

/// Terminal condition document.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TerminalDoc {
    pub schema_version: u32,
    pub dim: usize,
    /// Values for every terminal atom in lexicographic path order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values_lex: Option<Vec<Vec<f64>>>,
    /// Values keyed by path; every terminal atom must appear exactly once.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<TerminalValueDoc>>,
}

pub fn parse_terminal_doc(text: &str) -> Result<TerminalDoc> {
    parse(text, "terminal document")
}

/// Instantiates the terminal condition on a concrete tree.
pub fn build_terminal(doc: &TerminalDoc, tree: &ScenarioTree) -> Result<AdaptedProcess> {
    check_version(doc.schema_version, "terminal document")?;
    match (&doc.values_lex, &doc.values) {
        (Some(rows), None) => {
            for row in rows {
                if row.len() != doc.dim {
                    return Err(Error::Document(format!(
                        "terminal document: value {:?} does not have dimension {}",
                        row, doc.dim
                    )));
                }
            }
            AdaptedProcess::terminal_from_lex(tree, rows.clone())
        }
        (None, Some(entries)) => {
            let horizon = tree.horizon();
            let n = tree.n_atoms_at(horizon)?;
            let mut slots: Vec<Option<Vec<f64>>> = vec![None; n];
            for entry in entries {
                if entry.value.len() != doc.dim {
                    return Err(Error::Document(format!(
                        "terminal document: value at path {} does not have dimension {}",
                        path_label(&entry.path),
                        doc.dim
                    )));
                }
                let atom = tree.find_atom(&entry.path).ok_or_else(|| {
                    Error::Document(format!(
                        "terminal document: path {} is not a reachable atom",
                        path_label(&entry.path)
                    ))
                })?;
                if atom.time() != horizon {
                    return Err(Error::Document(format!(
                        "terminal document: path {} is at time {}, not the horizon {}",
                        path_label(&entry.path),
                        atom.time(),
                        horizon
                    )));
                }
                if slots[atom.index()].is_some() {
                    return Err(Error::Document(format!(
                        "terminal document: path {} appears twice",
                        path_label(&entry.path)
                    )));
                }
                slots[atom.index()] = Some(entry.value.clone());
            }
            let mut out = AdaptedProcess::zeros(tree, horizon, horizon, doc.dim)?;
            for (atom, slot) in tree.atoms_at(horizon)?.into_iter().zip(slots) {
                match slot {
                    Some(v) => out.set(atom, v),
                    None => {
                        return Err(Error::Document(format!(
                            "terminal document: no value for atom {}",
                            tree.label(atom)
                        )))
                    }
                }
            }
            Ok(out)
        }
        (Some(_), Some(_)) => Err(Error::Document(
            "terminal document: give values_lex or values, not both".into(),
        )),
        (None, None) => Err(Error::Document(
            "terminal document: one of values_lex or values is required".into(),
        )),
    }
}

/// Parses a static-map selector: "mean", "essinf", "mixture:alpha=0.1" or
/// "entropic:gamma=1.0".
pub fn parse_static_map(selector: &str) -> Result<StaticKind> {
    let (name, params) = match selector.split_once(':') {
        Some((n, p)) => (n.trim(), Some(p.trim())),
        None => (selector.trim(), None),
    };
    let require_param = |key: &str| -> Result<f64> {
        let params = params.ok_or_else(|| {
            Error::Document(format!(
                "static map \"{name}\" requires a parameter, e.g. \"{name}:{key}=0.5\""
            ))
        })?;
        let (got_key, value) = params.split_once('=').ok_or_else(|| {
            Error::Document(format!("static map parameter \"{params}\" is not key=value"))
        })?;
        if got_key.trim() != key {
            return Err(Error::Document(format!(
                "static map \"{name}\" expects parameter \"{key}\", got \"{got_key}\""
            )));
        }
        value.trim().parse::<f64>().map_err(|e| {
            Error::Document(format!("static map parameter \"{value}\" is not a number: {e}"))
        })
    };
    match name {
        "mean" => Ok(StaticKind::Mean),
        "essinf" => Ok(StaticKind::EssInf),
        "mixture" => Ok(StaticKind::Mixture {
            alpha: require_param("alpha")?,
        }),
        "entropic" => Ok(StaticKind::Entropic {
            gamma: require_param("gamma")?,
        }),
        other => Err(Error::Document(format!(
            "unknown static map \"{other}\"; expected mean, essinf, mixture:alpha=.. or \
             entropic:gamma=.."
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const COIN_TREE: &str = "\
schema_version = 1
n_states = 2
horizon = 2
initial_state = 0
markov_matrix = [[0.5, 0.5], [0.5, 0.5]]
";

    #[test]
    fn markov_tree_document_round_trips() {
        let doc = parse_tree_doc(COIN_TREE).unwrap();
        let tree = build_tree(&doc).unwrap();
        assert_eq!(tree.n_states(), 2);
        assert_eq!(tree.horizon(), 2);
        assert_eq!(tree.n_atoms_at(2).unwrap(), 4);
        assert!((tree.prob(tree.atoms_at(2).unwrap()[0]) - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn kernel_row_documents_support_inhomogeneous_trees() {
        let text = "\
schema_version = 1
n_states = 2
horizon = 2
initial_state = 0

[[kernel_rows]]
path = [0]
row = [0.3, 0.7]

[[kernel_rows]]
path = [0, 0]
row = [1.0, 0.0]

[[kernel_rows]]
path = [0, 1]
row = [0.5, 0.5]
";
        let tree = build_tree(&parse_tree_doc(text).unwrap()).unwrap();
        assert_eq!(tree.n_atoms_at(2).unwrap(), 3);
        let first = tree.atoms_at(1).unwrap()[0];
        assert_eq!(tree.support(first).unwrap(), &[0]);
    }

    #[test]
    fn tree_document_requires_exactly_one_kernel_source() {
        let none = "\
schema_version = 1
n_states = 2
horizon = 1
initial_state = 0
";
        let err = build_tree(&parse_tree_doc(none).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Document(_)));

        let doc = TreeDoc {
            schema_version: 1,
            n_states: 2,
            horizon: 1,
            initial_state: 0,
            markov_matrix: Some(vec![vec![1.0, 0.0], vec![0.0, 1.0]]),
            kernel_rows: Some(vec![]),
        };
        assert!(matches!(build_tree(&doc), Err(Error::Document(_))));
    }

    #[test]
    fn schema_version_is_enforced() {
        let text = COIN_TREE.replace("schema_version = 1", "schema_version = 2");
        let err = build_tree(&parse_tree_doc(&text).unwrap()).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
    }

    #[test]
    fn syntax_errors_carry_location_information() {
        let err = parse_tree_doc("n_states = [[").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("tree document"));
        assert!(msg.contains("line"), "missing location in: {msg}");
    }

    #[test]
    fn builtin_driver_documents_build() {
        let linear = "\
schema_version = 1
dim = 1

[builtin]
family = \"linear\"
increment_weights = [-2.0, 0.0]
";
        let driver = build_driver(&parse_driver_doc(linear).unwrap()).unwrap();
        assert!(driver.is_y_independent());
        assert!(driver.is_normalized());

        let tilt = "\
schema_version = 1
dim = 2

[builtin]
family = \"worst_case_tilt\"
gamma = 0.5
";
        let driver = build_driver(&parse_driver_doc(tilt).unwrap()).unwrap();
        assert_eq!(driver.dim(), 2);

        let missing_gamma = tilt.replace("gamma = 0.5", "");
        let err = build_driver(&parse_driver_doc(&missing_gamma).unwrap()).unwrap_err();
        assert!(err.to_string().contains("gamma"));

        let unknown = tilt.replace("worst_case_tilt", "nonsense");
        let err = build_driver(&parse_driver_doc(&unknown).unwrap()).unwrap_err();
        assert!(err.to_string().contains("unknown family"));
    }

    #[test]
    fn tabular_driver_documents_build() {
        let text = "\
schema_version = 1
dim = 1

[tabular]
n_states = 2
y_axis = [-1.0, 1.0]
increment_axes = [[-2.0, 2.0], [-2.0, 2.0]]
values = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
y_independent = true
normalized = true
";
        let driver = build_driver(&parse_driver_doc(text).unwrap()).unwrap();
        assert_eq!(driver.dim(), 1);
    }

    #[test]
    fn terminal_documents_build_both_ways() {
        let tree = build_tree(&parse_tree_doc(COIN_TREE).unwrap()).unwrap();

        let lex = "\
schema_version = 1
dim = 1
values_lex = [[0.0], [-2.0], [4.0], [-1.0]]
";
        let q = build_terminal(&parse_terminal_doc(lex).unwrap(), &tree).unwrap();
        let atoms = tree.atoms_at(2).unwrap();
        assert_eq!(q.value(atoms[2])[0], 4.0);

        let by_path = "\
schema_version = 1
dim = 1

[[values]]
path = [0, 1, 0]
value = [4.0]

[[values]]
path = [0, 0, 0]
value = [0.0]

[[values]]
path = [0, 0, 1]
value = [-2.0]

[[values]]
path = [0, 1, 1]
value = [-1.0]
";
        let q2 = build_terminal(&parse_terminal_doc(by_path).unwrap(), &tree).unwrap();
        assert_eq!(q.sub(&q2).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn terminal_documents_reject_gaps_and_duplicates() {
        let tree = build_tree(&parse_tree_doc(COIN_TREE).unwrap()).unwrap();
        let missing = "\
schema_version = 1
dim = 1

[[values]]
path = [0, 0, 0]
value = [1.0]
";
        let err = build_terminal(&parse_terminal_doc(missing).unwrap(), &tree).unwrap_err();
        assert!(err.to_string().contains("no value"));

        let duplicate = format!(
            "{missing}\n[[values]]\npath = [0, 0, 0]\nvalue = [2.0]\n"
        );
        let err = build_terminal(&parse_terminal_doc(&duplicate).unwrap(), &tree).unwrap_err();
        assert!(err.to_string().contains("twice"));

        let bad_path = "\
schema_version = 1
dim = 1

[[values]]
path = [1, 1, 1]
value = [1.0]
";
        let err = build_terminal(&parse_terminal_doc(bad_path).unwrap(), &tree).unwrap_err();
        assert!(err.to_string().contains("not a reachable atom"));
    }

    #[test]
    fn static_map_selectors_parse() {
        assert_eq!(parse_static_map("mean").unwrap(), StaticKind::Mean);
        assert_eq!(parse_static_map("essinf").unwrap(), StaticKind::EssInf);
        assert_eq!(
            parse_static_map("mixture:alpha=0.1").unwrap(),
            StaticKind::Mixture { alpha: 0.1 }
        );
        assert_eq!(
            parse_static_map("entropic: gamma = 2.0").unwrap(),
            StaticKind::Entropic { gamma: 2.0 }
        );
        assert!(parse_static_map("mixture").is_err());
        assert!(parse_static_map("mixture:beta=1").is_err());
        assert!(parse_static_map("median").is_err());
    }
}
