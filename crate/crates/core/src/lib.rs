//! Building blocks for affect-intensity lexicons annotated with best-worst
//! scaling: tuple designs, counting scores, split-half reliability, gold
//! question quality control, PMI term selection and simulated annotators.

pub mod design;
pub mod formats;
pub mod item;
pub mod quality;
pub mod reliability;
pub mod scoring;
pub mod simannotator;
pub mod termselect;

pub use design::{generate_design, validate_design, DesignConfig, DesignError, TupleDesign};
pub use item::{Item, ItemId, ItemSet};
pub use scoring::{count_scores, Annotation, ScoreTable, ScoringError};
