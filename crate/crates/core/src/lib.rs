//! Iterated integrals of modular forms along paths in the upper half-plane,
//! valued in truncated noncommutative power series.

pub mod error;
pub mod hecke;
pub mod itint;
pub mod mds;
pub mod mellin;
pub mod modforms;
pub mod ncseries;
pub mod paths;
pub mod regint;
pub mod report;

pub use error::{Error, Result};
pub use hecke::{EsRelation, HeckeSetup};
pub use itint::{EngineOptions, Form, NonlinearOmega, OmegaFamily, QuadOptions};
pub use mds::{CoefficientsData, LParams, ShuffleWithReps};
pub use mellin::{MellinOptions, TotalMellin};
pub use modforms::{FormOfModularType, FourierExpansion, GL2Z};
pub use ncseries::{Alphabet, LetterMap, NcSeries, Word, C64};
pub use paths::{BoundaryPoint, PathSpec, Segment};
pub use regint::{LogFormFamily, NormalizedSection, ScatteringOp};
pub use report::{CheckRow, Report, RunConfig};
