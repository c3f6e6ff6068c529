//! Event-camera recordings in the 5-byte address-event binary format used by
//! the converted-digits dataset (34x34 sensor, on/off polarities).
//!
//! Record layout, big-endian bit order:
//!
//! ```text
//! byte 0          x address
//! byte 1          y address
//! byte 2, bit 7   polarity (1 = on)
//! byte 2, bits 6..0 + bytes 3..4   23-bit timestamp, microseconds
//! ```

use super::LabeledEventSet;
use crate::encode::{Event, EventStream, Polarity};
use crate::error::{Error, Result};
use std::io::Read;
use std::path::Path;

pub const SENSOR_DIM: usize = 34;
const RECORD: usize = 5;
const T_MAX: u32 = (1 << 23) - 1;

/// Decodes one recording; the sensor is fixed at 34x34.
pub fn load_events(path: &Path) -> Result<EventStream> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_events(&bytes, path)
}

/// Decodes raw AER bytes (exposed for in-memory tests).
pub fn decode_events(bytes: &[u8], path: &Path) -> Result<EventStream> {
    if bytes.len() % RECORD != 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            offset: (bytes.len() - bytes.len() % RECORD) as u64,
            reason: format!("file length {} is not a multiple of {RECORD}", bytes.len()),
        });
    }
    let mut events = Vec::with_capacity(bytes.len() / RECORD);
    for (i, rec) in bytes.chunks_exact(RECORD).enumerate() {
        let x = rec[0] as u16;
        let y = rec[1] as u16;
        if x as usize >= SENSOR_DIM || y as usize >= SENSOR_DIM {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: (i * RECORD) as u64,
                reason: format!("event coordinates ({x}, {y}) outside {SENSOR_DIM}x{SENSOR_DIM}"),
            });
        }
        let polarity = if rec[2] & 0x80 != 0 {
            Polarity::On
        } else {
            Polarity::Off
        };
        let t_us = ((rec[2] & 0x7F) as u32) << 16 | (rec[3] as u32) << 8 | rec[4] as u32;
        events.push(Event {
            x,
            y,
            polarity,
            t_us,
        });
    }
    Ok(EventStream {
        events,
        width: SENSOR_DIM,
        height: SENSOR_DIM,
    })
}

/// Encodes a stream back into the 5-byte record format.
pub fn encode_events(stream: &EventStream) -> Result<Vec<u8>> {
    let mut bytes = Vec::with_capacity(stream.events.len() * RECORD);
    for (i, e) in stream.events.iter().enumerate() {
        if e.x as usize >= SENSOR_DIM || e.y as usize >= SENSOR_DIM || e.t_us > T_MAX {
            return Err(Error::Format {
                path: "<event stream>".into(),
                offset: i as u64,
                reason: format!("event {i} not representable: ({}, {}, t={})", e.x, e.y, e.t_us),
            });
        }
        bytes.push(e.x as u8);
        bytes.push(e.y as u8);
        let pol_bit = match e.polarity {
            Polarity::On => 0x80,
            Polarity::Off => 0x00,
        };
        bytes.push(pol_bit | ((e.t_us >> 16) as u8 & 0x7F));
        bytes.push((e.t_us >> 8) as u8);
        bytes.push(e.t_us as u8);
    }
    Ok(bytes)
}

pub fn save_events(stream: &EventStream, path: &Path) -> Result<()> {
    let bytes = encode_events(stream)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a `root/<label>/*.bin` directory tree (the dataset's Train/Test
/// layout). Labels and files are visited in sorted order so the result is
/// stable across filesystems.
pub fn load_event_dir(root: &Path) -> Result<LabeledEventSet> {
    let mut label_dirs: Vec<(u8, std::path::PathBuf)> = Vec::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let path = entry.path();
        if !path.is_dir() {
            continue;
        }
        if let Some(label) = path
            .file_name()
            .and_then(|n| n.to_str())
            .and_then(|n| n.parse::<u8>().ok())
        {
            label_dirs.push((label, path));
        }
    }
    label_dirs.sort();
    if label_dirs.is_empty() {
        return Err(Error::Config(format!(
            "no numeric label directories under {root:?}"
        )));
    }
    let mut streams = Vec::new();
    let mut labels = Vec::new();
    for (label, dir) in label_dirs {
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().map_or(false, |e| e == "bin"))
            .collect();
        files.sort();
        for f in files {
            streams.push(load_events(&f)?);
            labels.push(label);
        }
    }
    Ok(LabeledEventSet { streams, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_reference_record() {
        // (0x03, 0x04, 0x80, 0x00, 0x00) -> x=3, y=4, on, t=0
        let stream = decode_events(&[0x03, 0x04, 0x80, 0x00, 0x00], Path::new("mem")).unwrap();
        assert_eq!(
            stream.events,
            vec![Event {
                x: 3,
                y: 4,
                polarity: Polarity::On,
                t_us: 0
            }]
        );
    }

    #[test]
    fn timestamp_bits_concatenate_big_endian() {
        // t = 0x12345 with off polarity
        let bytes = [0x00, 0x00, 0x01, 0x23, 0x45];
        let stream = decode_events(&bytes, Path::new("mem")).unwrap();
        assert_eq!(stream.events[0].t_us, 0x12345);
        assert_eq!(stream.events[0].polarity, Polarity::Off);
        assert_eq!(encode_events(&stream).unwrap(), bytes);
    }

    #[test]
    fn empty_file_is_an_empty_stream() {
        let stream = decode_events(&[], Path::new("mem")).unwrap();
        assert!(stream.events.is_empty());
    }

    #[test]
    fn ragged_length_is_corruption() {
        let err = decode_events(&[1, 2, 3], Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
    }

    #[test]
    fn out_of_range_coordinates_are_corruption() {
        let err = decode_events(&[34, 0, 0, 0, 0], Path::new("mem")).unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn max_timestamp_round_trips() {
        let stream = EventStream {
            events: vec![Event {
                x: 33,
                y: 33,
                polarity: Polarity::Off,
                t_us: (1 << 23) - 1,
            }],
            width: SENSOR_DIM,
            height: SENSOR_DIM,
        };
        let bytes = encode_events(&stream).unwrap();
        let back = decode_events(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, stream);
    }
}
