//! Binary frame codec.
//!
//! ```text
//! frame   = "DSDR" | version:u8 | type:u8 | len:u32le | payload[len]
//! payload = dim_a:u32le | dim_b:u32le | scalars (u64le or f64le, matrices row-major)
//! ```
//!
//! | type | dims        | scalars                                          |
//! |------|-------------|--------------------------------------------------|
//! | 0x01 | p, worker   | n_s, y_min, y_max, xbar\[p\]                       |
//! | 0x02 | p, H        | grid\[H+1\], xbar\[p\]                               |
//! | 0x03 | p, H        | worker, n_s, counts\[H\], sums\[H*p\], scatter\[p*p\] |
//! | 0x04 | p, K        | worker, n_s, method, values\[K\], vectors\[p*K\]     |
//! | 0x7F | code        | UTF-8 text (no scalars)                          |

use dsdr_core::Method;
use ndarray::{Array1, Array2};

use crate::error::DecodeError;
use crate::message::{
    Broadcast1, EigenPayload, ErrorMsg, Message, MessageType, Round1Msg, Round2Msg,
};

pub const MAGIC: &[u8; 4] = b"DSDR";
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 10;
/// Upper bound on a single payload, to reject corrupt length fields early.
pub const MAX_PAYLOAD: usize = 1 << 30;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn reals<'a>(&mut self, it: impl IntoIterator<Item = &'a f64>) {
        for v in it {
            self.f64(*v);
        }
    }
}

fn dim(v: usize) -> u32 {
    u32::try_from(v).expect("dimension fits in u32")
}

/// Serializes the payload (without frame header).
pub fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(8 + 8 * msg.scalar_count() as usize));
    match msg {
        Message::Round1(m) => {
            w.u32(dim(m.xbar.len()));
            w.u32(m.worker_id);
            w.u64(m.n_s);
            w.f64(m.y_min);
            w.f64(m.y_max);
            w.reals(m.xbar.iter());
        }
        Message::Broadcast1(m) => {
            w.u32(dim(m.xbar_global.len()));
            w.u32(dim(m.grid.len().saturating_sub(1)));
            w.reals(m.grid.iter());
            w.reals(m.xbar_global.iter());
        }
        Message::Round2(m) => {
            w.u32(dim(m.scatter.nrows()));
            w.u32(dim(m.counts.len()));
            w.u64(u64::from(m.worker_id));
            w.u64(m.n_s);
            for c in &m.counts {
                w.u64(*c);
            }
            // iter() walks in logical row-major order regardless of layout
            w.reals(m.sums.iter());
            w.reals(m.scatter.iter());
        }
        Message::Eigen(m) => {
            w.u32(dim(m.vectors.nrows()));
            w.u32(dim(m.values.len()));
            w.u64(u64::from(m.worker_id));
            w.u64(m.n_s);
            w.u64(u64::from(m.method.tag()));
            w.reals(m.values.iter());
            w.reals(m.vectors.iter());
        }
        Message::Error(m) => {
            w.u32(m.code);
            w.0.extend_from_slice(m.text.as_bytes());
        }
    }
    w.0
}

/// Serializes a full frame.
pub fn encode(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(msg.kind().byte());
    out.extend_from_slice(&dim(payload.len()).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

/// Validates a frame header and returns the message type and payload length.
pub fn decode_header(h: &[u8]) -> Result<(MessageType, usize), DecodeError> {
    if h.len() < HEADER_LEN {
        return Err(DecodeError::new(h.len(), "truncated frame header"));
    }
    if &h[..4] != MAGIC {
        return Err(DecodeError::new(0, "bad magic"));
    }
    if h[4] != VERSION {
        return Err(DecodeError::new(4, format!("unsupported version {:#04x}", h[4])));
    }
    let kind = MessageType::from_byte(h[5])
        .ok_or_else(|| DecodeError::new(5, format!("unknown message type {:#04x}", h[5])))?;
    let len = u32::from_le_bytes(h[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(DecodeError::new(6, format!("payload length {len} too large")));
    }
    Ok((kind, len))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    /// Added to positions in error reports.
    base: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() - self.pos < n {
            return Err(DecodeError::new(self.base + self.pos, "payload truncated"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn reals(&mut self, n: usize) -> Result<Vec<f64>, DecodeError> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn worker(&mut self) -> Result<u32, DecodeError> {
        let at = self.base + self.pos;
        u32::try_from(self.u64()?).map_err(|_| DecodeError::new(at, "worker id exceeds u32"))
    }
    /// Checks that exactly `scalars` 8-byte values remain.
    fn expect_scalars(&self, scalars: Option<usize>) -> Result<(), DecodeError> {
        let remaining = self.buf.len() - self.pos;
        match scalars.and_then(|s| s.checked_mul(8)) {
            Some(b) if b == remaining => Ok(()),
            _ => Err(DecodeError::new(
                self.base + self.pos,
                format!("payload size {remaining} does not match declared dimensions"),
            )),
        }
    }
}

fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), data).expect("length checked")
}

/// Decodes a payload of the given type. Error offsets are relative to the
/// start of the frame.
pub fn decode_payload(kind: MessageType, payload: &[u8]) -> Result<Message, DecodeError> {
    let mut r = Reader {
        buf: payload,
        pos: 0,
        base: HEADER_LEN,
    };
    let msg = match kind {
        MessageType::Round1 => {
            let p = r.u32()? as usize;
            let worker_id = r.u32()?;
            r.expect_scalars(p.checked_add(3))?;
            Message::Round1(Round1Msg {
                worker_id,
                n_s: r.u64()?,
                y_min: r.f64()?,
                y_max: r.f64()?,
                xbar: Array1::from(r.reals(p)?),
            })
        }
        MessageType::Broadcast1 => {
            let p = r.u32()? as usize;
            let h = r.u32()? as usize;
            r.expect_scalars(h.checked_add(1).and_then(|g| g.checked_add(p)))?;
            Message::Broadcast1(Broadcast1 {
                grid: r.reals(h + 1)?,
                xbar_global: Array1::from(r.reals(p)?),
            })
        }
        MessageType::Round2 => {
            let p = r.u32()? as usize;
            let h = r.u32()? as usize;
            let total = h
                .checked_mul(p)
                .and_then(|hp| p.checked_mul(p).and_then(|pp| hp.checked_add(pp)))
                .and_then(|v| v.checked_add(2 + h));
            r.expect_scalars(total)?;
            let worker_id = r.worker()?;
            let n_s = r.u64()?;
            let counts = (0..h).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let sums = matrix(h, p, r.reals(h * p)?);
            let scatter = matrix(p, p, r.reals(p * p)?);
            Message::Round2(Round2Msg {
                worker_id,
                n_s,
                counts,
                sums,
                scatter,
            })
        }
        MessageType::Eigen => {
            let p = r.u32()? as usize;
            let k = r.u32()? as usize;
            let total = k
                .checked_mul(p)
                .and_then(|kp| kp.checked_add(k))
                .and_then(|v| v.checked_add(3));
            r.expect_scalars(total)?;
            let worker_id = r.worker()?;
            let n_s = r.u64()?;
            let at = r.base + r.pos;
            let tag = r.u64()?;
            let method = u8::try_from(tag)
                .ok()
                .and_then(Method::from_tag)
                .ok_or_else(|| DecodeError::new(at, format!("unknown method tag {tag}")))?;
            let values = Array1::from(r.reals(k)?);
            let vectors = matrix(p, k, r.reals(p * k)?);
            Message::Eigen(EigenPayload {
                worker_id,
                n_s,
                method,
                values,
                vectors,
            })
        }
        MessageType::Error => {
            let code = r.u32()?;
            let at = r.base + r.pos;
            let text = std::str::from_utf8(&payload[r.pos..])
                .map_err(|e| DecodeError::new(at + e.valid_up_to(), "error text is not UTF-8"))?
                .to_owned();
            r.pos = payload.len();
            Message::Error(ErrorMsg { code, text })
        }
    };
    debug_assert_eq!(r.pos, payload.len());
    Ok(msg)
}

/// Decodes one complete frame; trailing bytes are an error.
pub fn decode(frame: &[u8]) -> Result<Message, DecodeError> {
    let (kind, len) = decode_header(frame)?;
    let body = &frame[HEADER_LEN..];
    if body.len() != len {
        return Err(DecodeError::new(
            HEADER_LEN + body.len().min(len),
            format!("frame declares {len} payload bytes, has {}", body.len()),
        ));
    }
    decode_payload(kind, body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn round1_layout_is_byte_exact() {
        let m = Message::Round1(Round1Msg {
            worker_id: 7,
            n_s: 3,
            y_min: -1.0,
            y_max: 2.5,
            xbar: array![0.5, 1.0],
        });
        let f = encode(&m);
        assert_eq!(&f[..6], b"DSDR\x01\x01");
        assert_eq!(u32::from_le_bytes(f[6..10].try_into().unwrap()), 8 + 5 * 8);
        assert_eq!(&f[10..14], &2u32.to_le_bytes());
        assert_eq!(&f[14..18], &7u32.to_le_bytes());
        assert_eq!(&f[18..26], &3u64.to_le_bytes());
        assert_eq!(&f[26..34], &(-1.0f64).to_le_bytes());
        assert_eq!(&f[42..50], &0.5f64.to_le_bytes());
        assert_eq!(f.len(), HEADER_LEN + 8 + 8 * m.scalar_count() as usize);
        assert_eq!(decode(&f).unwrap(), m);
    }

    #[test]
    fn matrices_are_row_major() {
        let m = Message::Eigen(EigenPayload {
            worker_id: 1,
            n_s: 10,
            method: Method::Dr,
            values: array![2.0, 1.0],
            vectors: array![[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],
        });
        let f = encode(&m);
        let body = &f[HEADER_LEN + 8 + 3 * 8 + 2 * 8..];
        let vals: Vec<f64> = body
            .chunks(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(vals, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        // a transposed (column-major) view encodes the same logical matrix
        let mut t = match &m {
            Message::Eigen(e) => e.clone(),
            _ => unreachable!(),
        };
        t.vectors = t.vectors.t().to_owned().reversed_axes();
        assert_eq!(encode(&Message::Eigen(t)), f);
    }

    #[test]
    fn malformed_frames_report_offsets() {
        let m = Message::Broadcast1(Broadcast1 {
            grid: vec![0.0, 1.0, 2.0],
            xbar_global: array![1.0],
        });
        let f = encode(&m);
        let mut bad = f.clone();
        bad[0] = b'X';
        assert_eq!(decode(&bad).unwrap_err().offset, 0);
        let mut bad = f.clone();
        bad[5] = 0x09;
        assert_eq!(decode(&bad).unwrap_err().offset, 5);
        let e = decode(&f[..f.len() - 3]).unwrap_err();
        assert!(e.offset >= HEADER_LEN);
        // declared H disagrees with the payload length
        let mut bad = f.clone();
        bad[14] = 5;
        assert_eq!(decode(&bad).unwrap_err().offset, HEADER_LEN + 8);
    }

    #[test]
    fn error_frames_carry_text() {
        let m = Message::Error(ErrorMsg {
            code: 3,
            text: "shard is empty".into(),
        });
        assert_eq!(decode(&encode(&m)).unwrap(), m);
        assert_eq!(m.scalar_count(), 0);
    }
}
