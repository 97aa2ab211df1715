//! Standard MIDI File ingestion, the performance-event token vocabulary, and
//! training-window slicing.

mod dataset;
mod smf;
mod vocab;

pub use dataset::{read_token_file, window_dataset, write_token_file, TOKEN_FILE_MAGIC, TOKEN_FILE_VERSION};
pub use smf::{parse_midi, parse_midi_with_warnings, write_midi, WRITE_TEMPO, WRITE_TICKS_PER_QUARTER};
pub use vocab::{decode_events, encode_events, DecodeReport, Event, EventVocab, STEP_SECONDS};

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MidiError {
    #[error("malformed MIDI at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("invalid note sequence: {0}")]
    Validation(String),
    #[error("token {token} is not in the {vocab_size}-token vocabulary")]
    Vocabulary { token: usize, vocab_size: usize },
    #[error("bad token file: {0}")]
    TokenFile(String),
}

pub type Result<T> = std::result::Result<T, MidiError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Note {
    pub pitch: u8,
    pub velocity: u8,
    pub start_seconds: f64,
    pub end_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u64,
    pub microseconds_per_quarter: u32,
}

/// Notes in seconds, sorted by onset (then pitch), plus the timing grid
/// they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteSequence {
    pub notes: Vec<Note>,
    pub ticks_per_quarter: u16,
    pub tempo_events: Vec<TempoEvent>,
}

impl Default for NoteSequence {
    fn default() -> Self {
        Self {
            notes: Vec::new(),
            ticks_per_quarter: WRITE_TICKS_PER_QUARTER,
            tempo_events: vec![TempoEvent {
                tick: 0,
                microseconds_per_quarter: WRITE_TEMPO,
            }],
        }
    }
}

impl NoteSequence {
    pub fn from_notes(mut notes: Vec<Note>) -> Self {
        sort_notes(&mut notes);
        Self {
            notes,
            ..Self::default()
        }
    }

    /// Checks ranges and ordering of every note.
    pub fn validate(&self) -> Result<()> {
        for (i, n) in self.notes.iter().enumerate() {
            if n.pitch > 127 {
                return Err(MidiError::Validation(format!("note {i}: pitch {} > 127", n.pitch)));
            }
            if !(1..=127).contains(&n.velocity) {
                return Err(MidiError::Validation(format!("note {i}: velocity {} outside 1..=127", n.velocity)));
            }
            if !(n.start_seconds.is_finite() && n.end_seconds.is_finite()) || n.start_seconds < 0.0 {
                return Err(MidiError::Validation(format!("note {i}: bad start {}", n.start_seconds)));
            }
            if n.end_seconds <= n.start_seconds {
                return Err(MidiError::Validation(format!(
                    "note {i}: end {} not after start {}",
                    n.end_seconds, n.start_seconds
                )));
            }
        }
        if self.notes.windows(2).any(|w| w[1].start_seconds < w[0].start_seconds) {
            return Err(MidiError::Validation("notes not sorted by start time".into()));
        }
        Ok(())
    }

    /// End of the last sounding note, in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.notes.iter().map(|n| n.end_seconds).fold(0.0, f64::max)
    }
}

pub(crate) fn sort_notes(notes: &mut [Note]) {
    notes.sort_by(|a, b| {
        a.start_seconds
            .total_cmp(&b.start_seconds)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.end_seconds.total_cmp(&b.end_seconds))
    });
}
