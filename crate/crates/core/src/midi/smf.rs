//! Standard MIDI File reading and writing (formats 0 and 1).

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{FtgError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiNote {
    pub start_tick: u64,
    pub duration_ticks: u64,
    pub pitch: u8,
    pub velocity: u8,
    pub channel: u8,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiTrack {
    pub name: Option<String>,
    /// Sorted by start tick, then pitch.
    pub notes: Vec<MidiNote>,
    /// Tick of the end-of-track event (or of the last event when missing).
    pub end_tick: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TempoEvent {
    pub tick: u64,
    pub micros_per_quarter: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSignature {
    pub tick: u64,
    pub numerator: u8,
    pub denominator: u8,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MidiDocument {
    pub format: u16,
    pub ticks_per_quarter: u16,
    pub tempos: Vec<TempoEvent>,
    pub time_signatures: Vec<TimeSignature>,
    pub tracks: Vec<MidiTrack>,
}

impl MidiDocument {
    pub fn end_tick(&self) -> u64 {
        self.tracks.iter().map(|t| t.end_tick).max().unwrap_or(0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

fn err(offset: usize, message: impl Into<String>) -> FtgError {
    FtgError::MidiParse { offset, message: message.into() }
}

impl<'a> Cursor<'a> {
    fn byte(&mut self) -> Result<u8> {
        let b = *self.bytes.get(self.at).ok_or_else(|| err(self.at, "unexpected end of data"))?;
        self.at += 1;
        Ok(b)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(err(self.at, format!("need {n} bytes, {} left", self.bytes.len() - self.at)));
        }
        let out = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_be_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn vlq(&mut self) -> Result<u32> {
        let start = self.at;
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.byte()?;
            value = (value << 7) | u32::from(b & 0x7f);
            if b & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(err(start, "variable-length quantity longer than 4 bytes"))
    }
}

/// Decodes an SMF byte stream.
pub fn parse_midi(bytes: &[u8]) -> Result<MidiDocument> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(4).map_err(|_| err(0, "missing MThd header"))? != b"MThd" {
        return Err(err(0, "missing MThd header"));
    }
    let header_len = c.u32()? as usize;
    if header_len < 6 {
        return Err(err(4, format!("header length {header_len} < 6")));
    }
    let header_at = c.at;
    let format = c.u16()?;
    let ntracks = c.u16()?;
    let division = c.u16()?;
    if format > 2 {
        return Err(err(header_at, format!("unsupported SMF format {format}")));
    }
    if division & 0x8000 != 0 || division == 0 {
        return Err(err(header_at + 4, "SMPTE or zero time division is not supported"));
    }
    c.take(header_len - 6)?;

    let mut doc = MidiDocument {
        format,
        ticks_per_quarter: division,
        tempos: Vec::new(),
        time_signatures: Vec::new(),
        tracks: Vec::new(),
    };
    while doc.tracks.len() < ntracks as usize {
        let chunk_at = c.at;
        let id = c.take(4)?;
        let len = c.u32()? as usize;
        let body_at = c.at;
        let body = c.take(len).map_err(|_| err(chunk_at, format!("chunk length {len} runs past end of file")))?;
        if id != b"MTrk" {
            continue;
        }
        let track = parse_track(body, body_at, &mut doc)?;
        doc.tracks.push(track);
    }
    doc.tempos.sort_by_key(|e| e.tick);
    doc.time_signatures.sort_by_key(|e| e.tick);
    Ok(doc)
}

fn parse_track(body: &[u8], base: usize, doc: &mut MidiDocument) -> Result<MidiTrack> {
    let mut c = Cursor { bytes: body, at: 0 };
    let at = |c: &Cursor| base + c.at;
    let mut track = MidiTrack::default();
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut open: HashMap<(u8, u8), VecDeque<(u64, u8)>> = HashMap::new();
    let mut ended = false;

    let close = |notes: &mut Vec<MidiNote>, open: &mut HashMap<(u8, u8), VecDeque<(u64, u8)>>, ch: u8, pitch: u8, tick: u64| {
        if let Some((start, vel)) = open.get_mut(&(ch, pitch)).and_then(|q| q.pop_front()) {
            notes.push(MidiNote { start_tick: start, duration_ticks: tick - start, pitch, velocity: vel, channel: ch });
        }
    };

    while c.at < body.len() {
        tick += u64::from(c.vlq().map_err(|e| shift(e, base))?);
        let status_at = at(&c);
        let first = c.byte().map_err(|e| shift(e, base))?;
        let (status, first_data) = if first & 0x80 != 0 {
            (first, None)
        } else {
            let s = running.ok_or_else(|| err(status_at, "data byte without running status"))?;
            (s, Some(first))
        };
        match status {
            0xff => {
                running = None;
                let kind = c.byte().map_err(|e| shift(e, base))?;
                let len = c.vlq().map_err(|e| shift(e, base))? as usize;
                let data_at = at(&c);
                let data = c.take(len).map_err(|e| shift(e, base))?;
                match kind {
                    0x2f => {
                        ended = true;
                        break;
                    }
                    0x03 => track.name = Some(String::from_utf8_lossy(data).into_owned()),
                    0x51 => {
                        if len != 3 {
                            return Err(err(data_at, "tempo event must carry 3 bytes"));
                        }
                        let micros = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        doc.tempos.push(TempoEvent { tick, micros_per_quarter: micros });
                    }
                    0x58 => {
                        if len < 2 {
                            return Err(err(data_at, "time signature event too short"));
                        }
                        if data[1] > 7 {
                            return Err(err(data_at + 1, "time signature denominator exponent too large"));
                        }
                        doc.time_signatures.push(TimeSignature { tick, numerator: data[0], denominator: 1 << data[1] });
                    }
                    _ => {}
                }
            }
            0xf0 | 0xf7 => {
                running = None;
                let len = c.vlq().map_err(|e| shift(e, base))? as usize;
                c.take(len).map_err(|e| shift(e, base))?;
            }
            0x80..=0xef => {
                running = Some(status);
                let ch = status & 0x0f;
                let needs_two = !matches!(status & 0xf0, 0xc0 | 0xd0);
                let d1 = match first_data {
                    Some(d) => d,
                    None => c.byte().map_err(|e| shift(e, base))?,
                };
                let d2 = if needs_two { Some(c.byte().map_err(|e| shift(e, base))?) } else { None };
                if d1 & 0x80 != 0 || d2.is_some_and(|d| d & 0x80 != 0) {
                    return Err(err(at(&c) - 1, "data byte has the high bit set"));
                }
                match (status & 0xf0, d2) {
                    (0x90, Some(v)) if v > 0 => open.entry((ch, d1)).or_default().push_back((tick, v)),
                    (0x90, Some(_)) | (0x80, _) => close(&mut track.notes, &mut open, ch, d1, tick),
                    _ => {}
                }
            }
            other => return Err(err(status_at, format!("unsupported status byte {other:#04x}"))),
        }
    }
    if !ended && c.at < body.len() {
        return Err(err(at(&c), "events after end of track"));
    }
    track.end_tick = tick;
    // notes still sounding at the end of the track are cut there
    let mut keys: Vec<(u8, u8)> = open.keys().copied().collect();
    keys.sort_unstable();
    for (ch, pitch) in keys {
        while open.get(&(ch, pitch)).is_some_and(|q| !q.is_empty()) {
            close(&mut track.notes, &mut open, ch, pitch, tick);
        }
    }
    track.notes.sort_by_key(|n| (n.start_tick, n.pitch, n.channel));
    Ok(track)
}

fn shift(e: FtgError, base: usize) -> FtgError {
    match e {
        FtgError::MidiParse { offset, message } => FtgError::MidiParse { offset: offset + base, message },
        other => other,
    }
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(buf[i] | if i > 0 { 0x80 } else { 0 });
    }
}

/// Track to be written by [`write_midi`]; the first track also carries tempo
/// and time signature when present on the document.
pub fn write_midi(doc: &MidiDocument) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    let format: u16 = if doc.tracks.len() == 1 { doc.format.min(1) } else { 1 };
    out.extend_from_slice(&format.to_be_bytes());
    out.extend_from_slice(&(doc.tracks.len() as u16).to_be_bytes());
    out.extend_from_slice(&doc.ticks_per_quarter.to_be_bytes());

    for (i, track) in doc.tracks.iter().enumerate() {
        // (tick, order, bytes): meta first, then note-offs, then note-ons at a tick
        let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
        if let Some(name) = &track.name {
            let mut e = vec![0xff, 0x03];
            write_vlq(&mut e, name.len() as u32);
            e.extend_from_slice(name.as_bytes());
            events.push((0, 0, e));
        }
        if i == 0 {
            for t in &doc.tempos {
                let m = t.micros_per_quarter.to_be_bytes();
                events.push((t.tick, 0, vec![0xff, 0x51, 0x03, m[1], m[2], m[3]]));
            }
            for ts in &doc.time_signatures {
                let exp = ts.denominator.max(1).trailing_zeros() as u8;
                events.push((ts.tick, 0, vec![0xff, 0x58, 0x04, ts.numerator, exp, 24, 8]));
            }
        }
        for n in &track.notes {
            let ch = n.channel & 0x0f;
            events.push((n.start_tick, 2, vec![0x90 | ch, n.pitch, n.velocity.max(1)]));
            events.push((n.start_tick + n.duration_ticks, 1, vec![0x80 | ch, n.pitch, 0]));
        }
        events.sort_by_key(|e| (e.0, e.1));
        let last = events.last().map_or(0, |e| e.0);
        let mut body = Vec::new();
        let mut tick = 0u64;
        for (t, _, bytes) in &events {
            write_vlq(&mut body, (t - tick) as u32);
            body.extend_from_slice(bytes);
            tick = *t;
        }
        let end = track.end_tick.max(last);
        write_vlq(&mut body, (end - tick) as u32);
        body.extend_from_slice(&[0xff, 0x2f, 0x00]);
        out.extend_from_slice(b"MTrk");
        out.extend_from_slice(&(body.len() as u32).to_be_bytes());
        out.extend_from_slice(&body);
    }
    out
}
