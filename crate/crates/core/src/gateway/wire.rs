//! Byte-stream framing for packets and the JSON-lines timeline format.

use std::io::{BufRead, Read, Write};

use super::packet::SensorPacket;
use super::timeline::{FusedTimeline, TimelineRecord};
use super::GatewayError;

const MAX_FRAME: usize = 16 << 20;

/// Write one packet as a big-endian u32 length followed by JSON.
pub fn write_packet<W: Write>(w: &mut W, packet: &SensorPacket) -> Result<(), GatewayError> {
    let body = serde_json::to_vec(packet).map_err(|e| GatewayError::Decode(e.to_string()))?;
    let len = u32::try_from(body.len()).map_err(|_| GatewayError::Decode("frame too large".into()))?;
    w.write_all(&len.to_be_bytes()).map_err(io)?;
    w.write_all(&body).map_err(io)
}

/// Read one length-prefixed packet; `Ok(None)` on clean end of stream.
pub fn read_packet<R: Read>(r: &mut R) -> Result<Option<SensorPacket>, GatewayError> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(io(e)),
    }
    let n = u32::from_be_bytes(len) as usize;
    if n > MAX_FRAME {
        return Err(GatewayError::Decode(format!("frame of {n} bytes exceeds limit")));
    }
    let mut body = vec![0u8; n];
    r.read_exact(&mut body).map_err(io)?;
    serde_json::from_slice(&body)
        .map(Some)
        .map_err(|e| GatewayError::Decode(e.to_string()))
}

pub fn write_timeline_jsonl<W: Write>(w: &mut W, timeline: &FusedTimeline) -> Result<(), GatewayError> {
    for rec in timeline.iter() {
        serde_json::to_writer(&mut *w, rec).map_err(|e| GatewayError::Io(e.to_string()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    Ok(())
}

pub fn read_timeline_jsonl<R: BufRead>(r: R) -> Result<FusedTimeline, GatewayError> {
    let mut tl = FusedTimeline::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TimelineRecord =
            serde_json::from_str(&line).map_err(|e| GatewayError::Decode(format!("line {}: {e}", i + 1)))?;
        tl.append(rec)?;
    }
    Ok(tl)
}

fn io(e: std::io::Error) -> GatewayError {
    GatewayError::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::packet::{Payload, VoiceUtterance};

    #[test]
    fn framed_stream_round_trip() {
        let a = SensorPacket::new("mic", 5, Payload::Voice(VoiceUtterance { text: "hi".into() }));
        let b = SensorPacket::new("mic", 9, Payload::Voice(VoiceUtterance { text: "bye".into() }));
        let mut buf = Vec::new();
        write_packet(&mut buf, &a).unwrap();
        write_packet(&mut buf, &b).unwrap();
        let mut cur = std::io::Cursor::new(buf);
        assert_eq!(read_packet(&mut cur).unwrap(), Some(a));
        assert_eq!(read_packet(&mut cur).unwrap(), Some(b));
        assert_eq!(read_packet(&mut cur).unwrap(), None);
    }

    #[test]
    fn truncated_frame_is_an_error() {
        let a = SensorPacket::new("mic", 5, Payload::Voice(VoiceUtterance { text: "hi".into() }));
        let mut buf = Vec::new();
        write_packet(&mut buf, &a).unwrap();
        buf.truncate(buf.len() - 2);
        assert!(read_packet(&mut std::io::Cursor::new(buf)).is_err());
    }
}
