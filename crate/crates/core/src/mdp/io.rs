//! Binary replay-buffer file: 8-byte magic, u32 header length, JSON header,
//! then fixed-width little-endian transition records.

use super::buffer::{BufferMeta, ReplayBuffer, Transition, TripCache};
use super::MdpError;
use crate::action::{Action, NUM_ACTIONS};
use crate::geo::CellId;
use crate::state::{SpatioTemporalState, CONTEXT_LEN};
use crate::time::{DayKind, TimeSlot, SLOTS_PER_DAY};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

pub const MAGIC: &[u8; 8] = b"STRBUF\0\x01";
pub const SCHEMA_VERSION: u32 = 1;

const STATE_BYTES: usize = 8 + 1 + 1 + 8 * CONTEXT_LEN;
pub const RECORD_BYTES: usize = 8 + STATE_BYTES + 1 + 8 + STATE_BYTES + 1 + 8 + 8 + 16 * NUM_ACTIONS;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    record_size: usize,
    num_transitions: usize,
    num_original: usize,
    relabel_capacity: usize,
    relabel_cursor: usize,
    #[serde(flatten)]
    meta: BufferMeta,
}

pub fn write_buffer<W: Write>(mut out: W, buf: &ReplayBuffer) -> Result<(), MdpError> {
    let header = Header {
        schema_version: SCHEMA_VERSION,
        record_size: RECORD_BYTES,
        num_transitions: buf.len(),
        num_original: buf.original_len(),
        relabel_capacity: buf.relabel_capacity(),
        relabel_cursor: buf.relabel_cursor(),
        meta: buf.meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    let mut rec = Vec::with_capacity(RECORD_BYTES);
    for t in buf.transitions() {
        rec.clear();
        encode(t, &mut rec);
        debug_assert_eq!(rec.len(), RECORD_BYTES);
        out.write_all(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_buffer<R: Read>(mut input: R) -> Result<ReplayBuffer, MdpError> {
    let corrupt = |m: &str| MdpError::Corrupt(m.to_string());
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| corrupt("truncated magic"))?;
    if &magic != MAGIC {
        return Err(corrupt("not a replay buffer file"));
    }
    let mut len = [0u8; 4];
    input.read_exact(&mut len).map_err(|_| corrupt("truncated header length"))?;
    let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
    input.read_exact(&mut json).map_err(|_| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| MdpError::Corrupt(format!("header: {e}")))?;
    if header.schema_version != SCHEMA_VERSION {
        return Err(MdpError::Corrupt(format!("unsupported schema version {}", header.schema_version)));
    }
    if header.record_size != RECORD_BYTES {
        return Err(MdpError::Corrupt(format!("record size {} != {RECORD_BYTES}", header.record_size)));
    }
    if header.num_original > header.num_transitions {
        return Err(corrupt("more original transitions than records"));
    }
    let mut transitions = Vec::with_capacity(header.num_transitions.min(1 << 24));
    let mut rec = [0u8; RECORD_BYTES];
    for i in 0..header.num_transitions {
        input
            .read_exact(&mut rec)
            .map_err(|_| MdpError::Corrupt(format!("truncated at record {i} of {}", header.num_transitions)))?;
        transitions.push(decode(&rec).map_err(|m| MdpError::Corrupt(format!("record {i}: {m}")))?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(corrupt("trailing bytes after last record"));
    }
    let mut buf = ReplayBuffer::from_parts(header.meta, transitions, header.num_original, header.relabel_cursor);
    buf.set_relabel_capacity(header.relabel_capacity);
    Ok(buf)
}

fn put_state(s: &SpatioTemporalState, out: &mut Vec<u8>) {
    out.extend_from_slice(&s.cell.0.to_le_bytes());
    out.push(s.slot.day_kind.as_u8());
    out.push(s.slot.index);
    for v in s.context {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode(t: &Transition, out: &mut Vec<u8>) {
    out.extend_from_slice(&t.trip_id.to_le_bytes());
    put_state(&t.s, out);
    out.push(t.a.index() as u8);
    out.extend_from_slice(&t.r.to_le_bytes());
    put_state(&t.s_next, out);
    out.push(t.done as u8);
    out.extend_from_slice(&t.cache.fare.to_le_bytes());
    out.extend_from_slice(&t.cache.cr.to_le_bytes());
    for v in t.cache.delta_ecr.iter().chain(&t.cache.discounted) {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, tail) = self.0.split_at(N);
        self.0 = tail;
        head.try_into().expect("split length")
    }
    fn u8(&mut self) -> u8 {
        self.take::<1>()[0]
    }
    fn u64(&mut self) -> u64 {
        u64::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn state(&mut self) -> Result<SpatioTemporalState, String> {
        let cell = CellId(self.u64());
        let kind = DayKind::from_u8(self.u8()).ok_or("bad day kind")?;
        let index = self.u8();
        let slot = TimeSlot::new(u32::from(index), kind).ok_or_else(|| format!("slot {index} >= {SLOTS_PER_DAY}"))?;
        let context = std::array::from_fn(|_| self.f64());
        Ok(SpatioTemporalState { cell, slot, context })
    }
}

fn decode(rec: &[u8; RECORD_BYTES]) -> Result<Transition, String> {
    let mut c = Cursor(rec);
    let trip_id = c.u64();
    let s = c.state()?;
    let a = c.u8();
    let a = Action::from_index(a as usize).ok_or_else(|| format!("action index {a}"))?;
    let r = c.f64();
    let s_next = c.state()?;
    let done = match c.u8() {
        0 => false,
        1 => true,
        v => return Err(format!("done flag {v}")),
    };
    let fare = c.f64();
    let cr = c.f64();
    let delta_ecr = std::array::from_fn(|_| c.f64());
    let discounted = std::array::from_fn(|_| c.f64());
    Ok(Transition { trip_id, s, a, r, s_next, done, cache: TripCache { fare, cr, delta_ecr, discounted } })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::BoundingBox;
    use crate::mdp::RewardMode;
    use crate::state::NormStats;
    use crate::tiles::CodingConfig;
    use proptest::prelude::*;

    fn meta() -> BufferMeta {
        let bbox = BoundingBox { min_lat: 30.55, max_lat: 30.75, min_lon: 104.0, max_lon: 104.2 };
        BufferMeta {
            gamma: 0.9,
            reward_mode: RewardMode::Penalized { alpha: 0.25 },
            coding: CodingConfig::standard(bbox),
            norm: NormStats { mean: [1.0, 2.0, 3.0, 4.0], std: [0.5, 1.0, 2.0, 3.0] },
            skipped_trips: 3,
        }
    }

    fn state() -> impl Strategy<Value = SpatioTemporalState> {
        (any::<u64>(), 0u32..48, any::<bool>(), prop::array::uniform4(-1e6f64..1e6)).prop_map(|(c, i, w, ctx)| {
            let kind = if w { DayKind::Weekend } else { DayKind::Weekday };
            SpatioTemporalState { cell: CellId(c), slot: TimeSlot::new(i, kind).unwrap(), context: ctx }
        })
    }

    fn transition() -> impl Strategy<Value = Transition> {
        (
            any::<u64>(),
            state(),
            0usize..NUM_ACTIONS,
            -100f64..100.0,
            state(),
            any::<bool>(),
            (0.1f64..500.0, 0.05f64..1.0),
            prop::array::uniform6(-1f64..1.0),
            prop::array::uniform6(-50f64..50.0),
        )
            .prop_map(|(trip_id, s, a, r, s_next, done, (fare, cr), delta_ecr, discounted)| Transition {
                trip_id,
                s,
                a: Action::from_index(a).unwrap(),
                r,
                s_next,
                done,
                cache: TripCache { fare, cr, delta_ecr, discounted },
            })
    }

    proptest! {
        #[test]
        fn round_trip(ts in prop::collection::vec(transition(), 0..40), relabels in prop::collection::vec(transition(), 0..60)) {
            let mut buf = ReplayBuffer::new(meta(), ts);
            for t in relabels {
                buf.push_relabel(t);
            }
            let mut bytes = Vec::new();
            write_buffer(&mut bytes, &buf).unwrap();
            let back = read_buffer(bytes.as_slice()).unwrap();
            prop_assert_eq!(&back, &buf);
            for t in buf.transitions() {
                prop_assert_eq!(back.observed_actions(&t.s), buf.observed_actions(&t.s));
            }
        }
    }

    #[test]
    fn rejects_truncation_and_garbage() {
        let buf = ReplayBuffer::new(meta(), vec![]);
        let mut bytes = Vec::new();
        write_buffer(&mut bytes, &buf).unwrap();
        assert!(read_buffer(&bytes[..bytes.len() - 1]).is_err());
        assert!(matches!(read_buffer(&b"garbage!garbage"[..]), Err(MdpError::Corrupt(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_buffer(extra.as_slice()).is_err());
    }
}
