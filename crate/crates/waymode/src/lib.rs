//! Transportation mode inference from raw GPS trajectories.
//!
//! The pipeline mirrors a smartphone travel survey workflow: per-user GPS
//! streams are broken into trips with a rule-based algorithm, each trip is
//! turned into fixed-length segments carrying five motion channels (distance,
//! speed, acceleration, jerk, bearing rate), a library of 1-D convolutional
//! networks is trained on the segments, and four combination methods (average
//! vote, majority vote, optimal weights, random-forest stacking) merge the
//! library's predictions into final mode labels.
//!
//! Everything is seeded and deterministic: the same inputs and seeds produce
//! byte-identical segment files, model files, and reports, with or without
//! the `parallel` feature.

pub mod arch;
pub mod channels;
pub mod ensemble;
pub mod eval;
pub mod forest;
pub mod geo;
pub mod io;
pub mod nn;
pub mod par;
pub mod synth;
pub mod trip;

mod error;

pub use error::{Error, Result};

/// The four transportation modes, in the fixed class ordering used by every
/// classifier and file format in the crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    Walk = 0,
    Bike = 1,
    Transit = 2,
    Car = 3,
}

/// Number of mode classes.
pub const N_CLASSES: usize = 4;

impl Mode {
    pub const ALL: [Mode; N_CLASSES] = [Mode::Walk, Mode::Bike, Mode::Transit, Mode::Car];

    /// Class index in the fixed ordering `{0: walk, 1: bike, 2: transit, 3: car}`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<Mode> {
        Mode::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Walk => "walk",
            Mode::Bike => "bike",
            Mode::Transit => "transit",
            Mode::Car => "car",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s.trim().to_ascii_lowercase().as_str() {
            "walk" | "0" => Some(Mode::Walk),
            "bike" | "1" => Some(Mode::Bike),
            "transit" | "2" => Some(Mode::Transit),
            "car" | "3" => Some(Mode::Car),
            _ => None,
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}
