//! Standard MIDI File reader (formats 0 and 1) and format-0 writer.

use std::collections::HashMap;

use super::{sort_notes, MidiError, Note, NoteSequence, Result, TempoEvent};

pub const WRITE_TICKS_PER_QUARTER: u16 = 480;
pub const WRITE_TEMPO: u32 = 500_000;
const DEFAULT_TEMPO: u32 = 500_000;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T> {
        Err(MidiError::Parse {
            offset,
            message: message.into(),
        })
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return self.err(self.pos, format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn varlen(&mut self) -> Result<u32> {
        let start = self.pos;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8("variable-length quantity")?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        self.err(start, "variable-length quantity longer than 4 bytes")
    }
}

/// Note-on (velocity > 0) or note-off at an absolute tick.
struct RawEvent {
    tick: u64,
    channel: u8,
    pitch: u8,
    velocity: u8,
}

enum Timebase {
    Metrical(u16),
    /// Ticks per second for SMPTE division.
    Smpte(f64),
}

/// Parses a format 0 or 1 file into notes. Warnings (dangling or unmatched
/// notes) are logged.
pub fn parse_midi(bytes: &[u8]) -> Result<NoteSequence> {
    let (seq, warnings) = parse_midi_with_warnings(bytes)?;
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(seq)
}

/// As [`parse_midi`], returning the warnings instead of logging them.
pub fn parse_midi_with_warnings(bytes: &[u8]) -> Result<(NoteSequence, Vec<String>)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "header magic")? != b"MThd" {
        return r.err(0, "missing MThd header");
    }
    let header_len = r.u32("header length")? as usize;
    if header_len < 6 {
        return r.err(4, format!("header length {header_len} < 6"));
    }
    let format = r.u16("format")?;
    let ntracks = r.u16("track count")?;
    let division = r.u16("division")?;
    r.take(header_len - 6, "header padding")?;
    if format > 1 {
        return r.err(8, format!("unsupported SMF format {format}"));
    }
    let timebase = if division & 0x8000 != 0 {
        let fps = -((division >> 8) as u8 as i8) as f64;
        let fps = if fps == 29.0 { 29.97 } else { fps };
        Timebase::Smpte(fps * f64::from(division & 0xff))
    } else {
        if division == 0 {
            return r.err(12, "division of zero ticks per quarter");
        }
        Timebase::Metrical(division)
    };

    let mut events = Vec::new();
    let mut tempos = Vec::new();
    let mut last_tick = 0u64;
    let mut tracks_read = 0;
    while tracks_read < ntracks && r.pos < bytes.len() {
        let chunk_start = r.pos;
        let kind = r.take(4, "chunk type")?;
        let len = r.u32("chunk length")? as usize;
        if bytes.len() - r.pos < len {
            return r.err(chunk_start, format!("chunk declares {len} bytes, only {} remain", bytes.len() - r.pos));
        }
        if kind != b"MTrk" {
            r.pos += len;
            continue;
        }
        let end = r.pos + len;
        let mut track = Reader {
            bytes: &bytes[..end],
            pos: r.pos,
        };
        let tick = read_track(&mut track, &mut events, &mut tempos)?;
        last_tick = last_tick.max(tick);
        r.pos = end;
        tracks_read += 1;
    }
    if tracks_read < ntracks {
        log::debug!("header declares {ntracks} tracks, found {tracks_read}");
    }

    // tracks are concatenated in file order; a stable sort keeps per-tick order
    events.sort_by_key(|e: &RawEvent| e.tick);
    tempos.sort_by_key(|t: &TempoEvent| t.tick);
    let tempo_map = TempoMap::new(&tempos, &timebase);

    let mut warnings = Vec::new();
    let mut open: HashMap<(u8, u8), (u64, u8)> = HashMap::new();
    let mut notes = Vec::new();
    let mut close = |pitch: u8, start: u64, end: u64, velocity: u8, warnings: &mut Vec<String>| {
        if end > start {
            notes.push(Note {
                pitch,
                velocity,
                start_seconds: tempo_map.seconds(start),
                end_seconds: tempo_map.seconds(end),
            });
        } else {
            warnings.push(format!("dropped zero-length note {pitch} at tick {start}"));
        }
    };
    for e in &events {
        let key = (e.channel, e.pitch);
        if e.velocity > 0 {
            if let Some((start, vel)) = open.insert(key, (e.tick, e.velocity)) {
                close(e.pitch, start, e.tick, vel, &mut warnings);
            }
        } else if let Some((start, vel)) = open.remove(&key) {
            close(e.pitch, start, e.tick, vel, &mut warnings);
        } else {
            warnings.push(format!("note-off without note-on: pitch {} channel {} tick {}", e.pitch, e.channel, e.tick));
        }
    }
    let mut dangling: Vec<_> = open.into_iter().collect();
    dangling.sort_by_key(|&((ch, p), (t, _))| (t, ch, p));
    for ((_, pitch), (start, vel)) in dangling {
        warnings.push(format!("note {pitch} from tick {start} never released; closed at tick {last_tick}"));
        close(pitch, start, last_tick, vel, &mut warnings);
    }
    sort_notes(&mut notes);

    let ticks_per_quarter = match timebase {
        Timebase::Metrical(t) => t,
        Timebase::Smpte(_) => 0,
    };
    let tempo_events = if tempos.is_empty() {
        vec![TempoEvent {
            tick: 0,
            microseconds_per_quarter: DEFAULT_TEMPO,
        }]
    } else {
        tempos
    };
    Ok((
        NoteSequence {
            notes,
            ticks_per_quarter,
            tempo_events,
        },
        warnings,
    ))
}

/// Reads one MTrk body; returns the track's final tick.
fn read_track(r: &mut Reader<'_>, events: &mut Vec<RawEvent>, tempos: &mut Vec<TempoEvent>) -> Result<u64> {
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    while r.pos < r.bytes.len() {
        tick += u64::from(r.varlen()?);
        let at = r.pos;
        let first = r.u8("event status")?;
        let (status, data0) = if first & 0x80 != 0 {
            (first, None)
        } else {
            match running {
                Some(s) => (s, Some(first)),
                None => return r.err(at, format!("data byte {first:#04x} with no running status")),
            }
        };
        match status {
            0x80..=0xef => {
                running = Some(status);
                let a = match data0 {
                    Some(b) => b,
                    None => r.u8("channel message data")?,
                };
                let kind = status & 0xf0;
                let b = if matches!(kind, 0xc0 | 0xd0) { 0 } else { r.u8("channel message data")? };
                if a > 127 || b > 127 {
                    return r.err(at, "channel message data byte has the high bit set");
                }
                let channel = status & 0x0f;
                match kind {
                    0x90 => events.push(RawEvent {
                        tick,
                        channel,
                        pitch: a,
                        velocity: b,
                    }),
                    0x80 => events.push(RawEvent {
                        tick,
                        channel,
                        pitch: a,
                        velocity: 0,
                    }),
                    _ => {}
                }
            }
            0xff => {
                running = None;
                let kind = r.u8("meta type")?;
                let len = r.varlen()? as usize;
                let data = r.take(len, "meta event")?;
                match kind {
                    0x51 if len == 3 => tempos.push(TempoEvent {
                        tick,
                        microseconds_per_quarter: u32::from_be_bytes([0, data[0], data[1], data[2]]),
                    }),
                    0x2f => return Ok(tick),
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = r.varlen()? as usize;
                r.take(len, "sysex event")?;
            }
            _ => return r.err(at, format!("unexpected status byte {status:#04x}")),
        }
    }
    Ok(tick)
}

/// Piecewise-linear tick → seconds conversion.
struct TempoMap {
    /// (tick, seconds at tick, microseconds per quarter from here on)
    segments: Vec<(u64, f64, f64)>,
    /// Divides `ticks * microseconds`; ratios stay exact for round values.
    denominator: f64,
}

impl TempoMap {
    fn new(tempos: &[TempoEvent], timebase: &Timebase) -> Self {
        let tpq = match *timebase {
            Timebase::Smpte(ticks_per_second) => {
                return Self {
                    segments: vec![(0, 0.0, 1.0)],
                    denominator: ticks_per_second,
                }
            }
            Timebase::Metrical(t) => f64::from(t),
        };
        let mut map = Self {
            segments: vec![(0u64, 0.0, f64::from(DEFAULT_TEMPO))],
            denominator: tpq * 1e6,
        };
        for t in tempos {
            let sec = map.seconds(t.tick);
            if map.segments.last().is_some_and(|s| s.0 == t.tick) {
                map.segments.pop();
            }
            map.segments.push((t.tick, sec, f64::from(t.microseconds_per_quarter)));
        }
        map
    }

    fn seconds(&self, tick: u64) -> f64 {
        let i = self.segments.partition_point(|s| s.0 <= tick) - 1;
        let (t0, s0, us) = self.segments[i];
        s0 + (tick - t0) as f64 * us / self.denominator
    }
}

fn push_varlen(out: &mut Vec<u8>, mut v: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (v & 0x7f) as u8;
        n += 1;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(buf[i] | if i > 0 { 0x80 } else { 0 });
    }
}

/// Serializes notes as a format-0 file at 480 ticks per quarter and 120 bpm.
/// Overlapping notes of the same pitch are spread over channels so each
/// keeps its own on/off pair.
pub fn write_midi(ns: &NoteSequence) -> Result<Vec<u8>> {
    ns.validate()?;
    let ticks_per_second = f64::from(WRITE_TICKS_PER_QUARTER) * 1e6 / f64::from(WRITE_TEMPO);
    let to_tick = |s: f64| (s * ticks_per_second).round() as u64;

    // (tick, is_on, channel, pitch, velocity)
    let mut events: Vec<(u64, bool, u8, u8, u8)> = Vec::with_capacity(2 * ns.notes.len());
    let mut busy_until: HashMap<(u8, u8), u64> = HashMap::new();
    for n in &ns.notes {
        let start = to_tick(n.start_seconds);
        let end = to_tick(n.end_seconds).max(start + 1);
        let channel = (0u8..16)
            .filter(|&c| c != 9)
            .find(|&c| busy_until.get(&(c, n.pitch)).is_none_or(|&t| t <= start))
            .ok_or_else(|| MidiError::Validation(format!("more than 15 overlapping notes of pitch {}", n.pitch)))?;
        busy_until.insert((channel, n.pitch), end);
        events.push((start, true, channel, n.pitch, n.velocity));
        events.push((end, false, channel, n.pitch, 0));
    }
    // offs before ons at the same tick
    events.sort_by_key(|&(tick, on, ch, pitch, _)| (tick, on, ch, pitch));

    let mut track = Vec::new();
    push_varlen(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x51, 0x03]);
    track.extend_from_slice(&WRITE_TEMPO.to_be_bytes()[1..]);
    let mut now = 0u64;
    for (tick, on, ch, pitch, vel) in events {
        let delta = u32::try_from(tick - now).map_err(|_| MidiError::Validation("note time too large".into()))?;
        push_varlen(&mut track, delta);
        now = tick;
        if on {
            track.extend_from_slice(&[0x90 | ch, pitch, vel]);
        } else {
            track.extend_from_slice(&[0x80 | ch, pitch, 0x40]);
        }
    }
    push_varlen(&mut track, 0);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(track.len() + 22);
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&WRITE_TICKS_PER_QUARTER.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-assembled file: tempo 500000, note 60 on at 0, off 480 ticks later.
    fn minimal() -> Vec<u8> {
        let track: &[u8] = &[
            0x00, 0xff, 0x51, 0x03, 0x07, 0xa1, 0x20, // tempo 500000
            0x00, 0x90, 60, 64, // note on
            0x83, 0x60, 0x80, 60, 0x40, // delta 480, note off
            0x00, 0xff, 0x2f, 0x00,
        ];
        let mut f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(track);
        f
    }

    #[test]
    fn minimal_file_gives_half_second_note() {
        let ns = parse_midi(&minimal()).unwrap();
        assert_eq!(ns.ticks_per_quarter, 480);
        assert_eq!(ns.notes.len(), 1);
        let n = ns.notes[0];
        assert_eq!((n.pitch, n.velocity, n.start_seconds), (60, 64, 0.0));
        assert!((n.end_seconds - 0.5).abs() < 1e-12);
    }

    #[test]
    fn writer_reproduces_minimal_file_bytes() {
        let ns = parse_midi(&minimal()).unwrap();
        let written = write_midi(&ns).unwrap();
        assert_eq!(written, minimal());
    }

    #[test]
    fn empty_track_is_empty_sequence() {
        let f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk\x00\x00\x00\x04\x00\xff\x2f\x00";
        assert!(parse_midi(f).unwrap().notes.is_empty());
        let written = write_midi(&NoteSequence::default()).unwrap();
        assert!(parse_midi(&written).unwrap().notes.is_empty());
    }

    #[test]
    fn velocity_zero_and_running_status_close_notes() {
        // on 60, running-status on 60 vel 0 after 240 ticks
        let track: &[u8] = &[0x00, 0x90, 60, 100, 0x81, 0x70, 60, 0x00, 0x00, 0xff, 0x2f, 0x00];
        let mut f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(track);
        let (ns, warnings) = parse_midi_with_warnings(&f).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(ns.notes.len(), 1);
        assert!((ns.notes[0].end_seconds - 0.25).abs() < 1e-12);
    }

    #[test]
    fn errors_carry_byte_offsets() {
        let e = parse_midi(b"RIFF\x00\x00\x00\x06").unwrap_err();
        assert!(matches!(e, MidiError::Parse { offset: 0, .. }));

        let mut truncated = minimal();
        truncated.truncate(truncated.len() - 5);
        assert!(matches!(parse_midi(&truncated).unwrap_err(), MidiError::Parse { offset: 14, .. }));

        // data byte first in a track
        let track: &[u8] = &[0x00, 60, 64];
        let mut f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(track);
        assert_eq!(
            parse_midi(&f).unwrap_err(),
            MidiError::Parse {
                offset: 23,
                message: "data byte 0x3c with no running status".into()
            }
        );
    }

    #[test]
    fn dangling_note_closed_at_last_tick_with_warning() {
        let track: &[u8] = &[0x00, 0x90, 62, 80, 0x83, 0x60, 0xff, 0x2f, 0x00];
        let mut f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(track);
        let (ns, warnings) = parse_midi_with_warnings(&f).unwrap();
        assert_eq!(warnings.len(), 1);
        assert!((ns.notes[0].end_seconds - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tempo_change_mid_track() {
        // 480 ticks at 120 bpm then tempo 1s/quarter, note from 480 to 960
        let track: &[u8] = &[
            0x83, 0x60, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40, // tick 480: tempo 1_000_000
            0x00, 0x90, 64, 90, 0x83, 0x60, 0x80, 64, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let mut f = b"MThd\x00\x00\x00\x06\x00\x00\x00\x01\x01\xe0MTrk".to_vec();
        f.extend_from_slice(&(track.len() as u32).to_be_bytes());
        f.extend_from_slice(track);
        let ns = parse_midi(&f).unwrap();
        assert!((ns.notes[0].start_seconds - 0.5).abs() < 1e-12);
        assert!((ns.notes[0].end_seconds - 1.5).abs() < 1e-12);
    }

    #[test]
    fn chord_survives_round_trip() {
        let notes = [60, 64, 67]
            .map(|p| Note {
                pitch: p,
                velocity: 70,
                start_seconds: 1.0,
                end_seconds: 2.0,
            })
            .to_vec();
        let ns = NoteSequence::from_notes(notes);
        let back = parse_midi(&write_midi(&ns).unwrap()).unwrap();
        assert_eq!(back.notes, ns.notes);
    }

    #[test]
    fn overlapping_same_pitch_notes_use_separate_channels() {
        let ns = NoteSequence::from_notes(vec![
            Note {
                pitch: 60,
                velocity: 50,
                start_seconds: 0.0,
                end_seconds: 3.0,
            },
            Note {
                pitch: 60,
                velocity: 90,
                start_seconds: 1.0,
                end_seconds: 2.0,
            },
        ]);
        let back = parse_midi(&write_midi(&ns).unwrap()).unwrap();
        assert_eq!(back.notes, ns.notes);
    }

    #[test]
    fn writer_rejects_out_of_range_values() {
        let bad = NoteSequence::from_notes(vec![Note {
            pitch: 130,
            velocity: 50,
            start_seconds: 0.0,
            end_seconds: 1.0,
        }]);
        assert!(matches!(write_midi(&bad), Err(MidiError::Validation(_))));
    }
}
