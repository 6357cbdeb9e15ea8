//! Serialized model payloads exchanged between server and clients.
//!
//! Every transfer in a simulated round is encoded with this format and its
//! byte length is what the traffic meters record.
//!
//! ```text
//! header (20 bytes):  "FFPL" | version u32 | kind u32 | sender u32 | entry_count u32
//! entry  (12 + 4k):   layer u32 | channel u32 | k u32 | k × f32
//! ```
//!
//! All integers and floats are little-endian. An entry carries one channel:
//! its weight row followed by its bias.

use crate::error::{Error, Result};
use crate::nn::{ChannelId, Model};

pub const MAGIC: &[u8; 4] = b"FFPL";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;
pub const ENTRY_HEADER_LEN: usize = 12;

/// Sender id used for server broadcasts.
pub const SERVER: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PayloadKind {
    /// Server to client: absolute channel parameters.
    Broadcast = 0,
    /// Client to server: parameter deltas.
    ClientDelta = 1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Payload {
    pub kind: PayloadKind,
    pub sender: u32,
    pub entries: Vec<(ChannelId, Vec<f32>)>,
}

impl Payload {
    /// Broadcast of the current values of `channels`.
    pub fn broadcast(model: &Model, channels: &[ChannelId]) -> Result<Self> {
        let entries = channels
            .iter()
            .map(|&ch| Ok((ch, model.channel_values(ch)?)))
            .collect::<Result<_>>()?;
        Ok(Self {
            kind: PayloadKind::Broadcast,
            sender: SERVER,
            entries,
        })
    }

    /// Overwrites the broadcast channels in `model` (the client's cached copy).
    pub fn apply_to(&self, model: &mut Model) -> Result<()> {
        if self.kind != PayloadKind::Broadcast {
            return Err(Error::Wire("only broadcasts carry absolute parameters".into()));
        }
        for (ch, values) in &self.entries {
            model.set_channel_values(*ch, values)?;
        }
        Ok(())
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + self
                .entries
                .iter()
                .map(|(_, v)| ENTRY_HEADER_LEN + 4 * v.len())
                .sum::<usize>()
    }
}

fn u32_of(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Wire(format!("{what} {v} exceeds u32")))
}

pub fn encode(p: &Payload) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(p.encoded_len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.kind as u32).to_le_bytes());
    out.extend_from_slice(&p.sender.to_le_bytes());
    out.extend_from_slice(&u32_of(p.entries.len(), "entry count")?.to_le_bytes());
    for (ch, values) in &p.entries {
        out.extend_from_slice(&u32_of(ch.layer, "layer index")?.to_le_bytes());
        out.extend_from_slice(&u32_of(ch.channel, "channel index")?.to_le_bytes());
        out.extend_from_slice(&u32_of(values.len(), "entry length")?.to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Payload> {
    let mut pos = 0usize;
    let mut word = |what: &str| -> Result<u32> {
        let b = bytes
            .get(pos..pos + 4)
            .ok_or_else(|| Error::Wire(format!("truncated {what} at byte {pos}")))?;
        pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    if bytes.get(..4) != Some(MAGIC.as_slice()) {
        return Err(Error::Wire("bad magic".into()));
    }
    word("magic")?;
    let version = word("version")?;
    if version != VERSION {
        return Err(Error::Wire(format!("unsupported version {version}")));
    }
    let kind = match word("kind")? {
        0 => PayloadKind::Broadcast,
        1 => PayloadKind::ClientDelta,
        k => return Err(Error::Wire(format!("unknown payload kind {k}"))),
    };
    let sender = word("sender")?;
    let count = word("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let layer = word("layer index")? as usize;
        let channel = word("channel index")? as usize;
        let len = word("entry length")? as usize;
        let mut values = Vec::with_capacity(len.min(1 << 20));
        for _ in 0..len {
            values.push(f32::from_bits(word("value")?));
        }
        entries.push((ChannelId::new(layer, channel), values));
    }
    if pos != bytes.len() {
        return Err(Error::Wire(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(Payload {
        kind,
        sender,
        entries,
    })
}
