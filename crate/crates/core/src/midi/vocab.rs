//! Performance-event vocabulary.
//!
//! | ids       | event                                   |
//! |-----------|-----------------------------------------|
//! | 0..128    | NOTE_ON pitch                           |
//! | 128..256  | NOTE_OFF pitch                          |
//! | 256..356  | TIME_SHIFT of 10 ms × (id − 255)        |
//! | 356..388  | VELOCITY bin (velocity / 4)             |
//! | 388       | PAD                                     |
//! | 389       | BOS                                     |

use std::collections::HashMap;

use super::{sort_notes, MidiError, Note, NoteSequence, Result};

/// Length of one time-shift step.
pub const STEP_SECONDS: f64 = 0.01;

const NOTE_ON: usize = 0;
const NOTE_OFF: usize = 128;
const TIME_SHIFT: usize = 256;
const MAX_SHIFT_STEPS: usize = 100;
const VELOCITY: usize = 356;
const VELOCITY_BINS: usize = 32;
const PAD: usize = 388;
const BOS: usize = 389;
const SIZE: usize = 390;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Event {
    NoteOn(u8),
    NoteOff(u8),
    /// Advance time by this many 10 ms steps (1..=100).
    TimeShift(u8),
    /// Velocity bin 0..32 applied to subsequent note-ons.
    Velocity(u8),
    Pad,
    Bos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EventVocab;

impl EventVocab {
    pub fn size(&self) -> usize {
        SIZE
    }

    pub fn pad(&self) -> usize {
        PAD
    }

    pub fn bos(&self) -> usize {
        BOS
    }

    pub fn id(&self, event: Event) -> usize {
        match event {
            Event::NoteOn(p) => NOTE_ON + usize::from(p & 0x7f),
            Event::NoteOff(p) => NOTE_OFF + usize::from(p & 0x7f),
            Event::TimeShift(k) => TIME_SHIFT + usize::from(k).clamp(1, MAX_SHIFT_STEPS) - 1,
            Event::Velocity(b) => VELOCITY + usize::from(b).min(VELOCITY_BINS - 1),
            Event::Pad => PAD,
            Event::Bos => BOS,
        }
    }

    pub fn event(&self, id: usize) -> Result<Event> {
        Ok(match id {
            0..128 => Event::NoteOn(id as u8),
            128..256 => Event::NoteOff((id - NOTE_OFF) as u8),
            256..356 => Event::TimeShift((id - TIME_SHIFT + 1) as u8),
            356..388 => Event::Velocity((id - VELOCITY) as u8),
            PAD => Event::Pad,
            BOS => Event::Bos,
            _ => {
                return Err(MidiError::Vocabulary {
                    token: id,
                    vocab_size: SIZE,
                })
            }
        })
    }

    pub fn velocity_bin(velocity: u8) -> u8 {
        velocity.min(127) / 4
    }

    /// Representative velocity of a bin (its midpoint).
    pub fn bin_velocity(bin: u8) -> u8 {
        bin * 4 + 2
    }

    /// Stable fingerprint of the id layout, stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let layout = format!(
            "on:{NOTE_ON} off:{NOTE_OFF} shift:{TIME_SHIFT}x{MAX_SHIFT_STEPS} vel:{VELOCITY}x{VELOCITY_BINS} pad:{PAD} bos:{BOS} size:{SIZE}"
        );
        // FNV-1a
        layout
            .bytes()
            .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
    }
}

fn to_steps(seconds: f64) -> u64 {
    (seconds / STEP_SECONDS).round() as u64
}

/// Serializes notes as `[BOS, ...]`: offs before ons at equal times, velocity
/// tokens only when the bin changes, gaps as greedy runs of maximal shifts.
/// Times are quantized to 10 ms and every note lasts at least one step.
pub fn encode_events(ns: &NoteSequence, vocab: &EventVocab) -> Result<Vec<usize>> {
    ns.validate()?;
    // (step, is_on, pitch, velocity)
    let mut events: Vec<(u64, bool, u8, u8)> = Vec::with_capacity(2 * ns.notes.len());
    for n in &ns.notes {
        let start = to_steps(n.start_seconds);
        let end = to_steps(n.end_seconds).max(start + 1);
        events.push((start, true, n.pitch, n.velocity));
        events.push((end, false, n.pitch, 0));
    }
    events.sort_by_key(|&(step, on, pitch, _)| (step, on, pitch));

    let mut tokens = vec![vocab.bos()];
    let mut now = 0u64;
    let mut bin = None;
    for (step, on, pitch, velocity) in events {
        let mut gap = step - now;
        while gap > 0 {
            let k = gap.min(MAX_SHIFT_STEPS as u64);
            tokens.push(vocab.id(Event::TimeShift(k as u8)));
            gap -= k;
        }
        now = step;
        if on {
            let b = EventVocab::velocity_bin(velocity);
            if bin != Some(b) {
                tokens.push(vocab.id(Event::Velocity(b)));
                bin = Some(b);
            }
            tokens.push(vocab.id(Event::NoteOn(pitch)));
        } else {
            tokens.push(vocab.id(Event::NoteOff(pitch)));
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DecodeReport {
    /// NOTE_OFF tokens with no sounding note.
    pub stray_note_offs: usize,
    /// Notes still sounding at the end, closed there.
    pub dangling_note_ons: usize,
}

/// Rebuilds notes from tokens. A NOTE_ON for a pitch that is already
/// sounding ends the earlier note; PAD and BOS are skipped.
pub fn decode_events(tokens: &[usize], vocab: &EventVocab) -> Result<(NoteSequence, DecodeReport)> {
    let mut report = DecodeReport::default();
    let mut notes = Vec::new();
    let mut open: HashMap<u8, (u64, u8)> = HashMap::new();
    let mut now = 0u64;
    let mut velocity = EventVocab::bin_velocity(16);
    let seconds = |step: u64| step as f64 * STEP_SECONDS;
    let mut close = |pitch: u8, start: u64, end: u64, velocity: u8| {
        if end > start {
            notes.push(Note {
                pitch,
                velocity,
                start_seconds: seconds(start),
                end_seconds: seconds(end),
            });
        }
    };
    for &t in tokens {
        match vocab.event(t)? {
            Event::NoteOn(p) => {
                if let Some((start, v)) = open.insert(p, (now, velocity)) {
                    close(p, start, now, v);
                }
            }
            Event::NoteOff(p) => match open.remove(&p) {
                Some((start, v)) => close(p, start, now, v),
                None => report.stray_note_offs += 1,
            },
            Event::TimeShift(k) => now += u64::from(k),
            Event::Velocity(b) => velocity = EventVocab::bin_velocity(b),
            Event::Pad | Event::Bos => {}
        }
    }
    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_unstable();
    report.dangling_note_ons = dangling.len();
    for (p, (start, v)) in dangling {
        close(p, start, now.max(start + 1), v);
    }
    sort_notes(&mut notes);
    if report.stray_note_offs > 0 {
        log::warn!("{} NOTE_OFF tokens without a sounding note", report.stray_note_offs);
    }
    Ok((NoteSequence::from_notes(notes), report))
}
