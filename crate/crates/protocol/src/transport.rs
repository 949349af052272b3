//! Frame transports: ordered in-process queues and TCP streams. Both carry
//! the same encoded frames.

use std::io::{ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::time::{Duration, Instant};

use crate::error::{ProtocolError, Result};
use crate::message::Message;
use crate::wire::{decode_header, decode_payload, encode, HEADER_LEN};

/// One end of a bidirectional frame channel.
pub trait Link: Send {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()>;

    /// Reads one complete frame and the stream offset at which it started.
    fn recv_frame(&mut self) -> Result<(Vec<u8>, u64)>;
}

/// Encodes and sends `msg`, returning the frame length.
pub fn send_message(link: &mut dyn Link, msg: &Message) -> Result<usize> {
    let frame = encode(msg);
    link.send_frame(&frame)?;
    Ok(frame.len())
}

/// Receives and decodes one message, returning it with its frame length.
pub fn recv_message(link: &mut dyn Link) -> Result<(Message, usize)> {
    let (frame, offset) = link.recv_frame()?;
    let (kind, len) = decode_header(&frame).map_err(|e| ProtocolError::transport(offset, e))?;
    if frame.len() != HEADER_LEN + len {
        return Err(ProtocolError::transport(offset, "frame length mismatch"));
    }
    let msg = decode_payload(kind, &frame[HEADER_LEN..]).map_err(|e| ProtocolError::transport(offset, e))?;
    Ok((msg, frame.len()))
}

/// In-process link backed by a pair of channels.
pub struct InProcLink {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sent: u64,
    received: u64,
}

/// Two connected in-process endpoints.
pub fn inproc_pair() -> (InProcLink, InProcLink) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        InProcLink {
            tx: tx_a,
            rx: rx_a,
            sent: 0,
            received: 0,
        },
        InProcLink {
            tx: tx_b,
            rx: rx_b,
            sent: 0,
            received: 0,
        },
    )
}

impl Link for InProcLink {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.tx
            .send(frame.to_vec())
            .map_err(|_| ProtocolError::transport(self.sent, "peer disconnected"))?;
        self.sent += frame.len() as u64;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<(Vec<u8>, u64)> {
        let offset = self.received;
        let frame = self
            .rx
            .recv()
            .map_err(|_| ProtocolError::transport(offset, "peer disconnected"))?;
        self.received += frame.len() as u64;
        Ok((frame, offset))
    }
}

/// TCP link; each frame goes out in a single write.
pub struct TcpLink {
    stream: TcpStream,
    sent: u64,
    received: u64,
}

pub const IO_TIMEOUT: Duration = Duration::from_secs(60);

impl TcpLink {
    pub fn new(stream: TcpStream) -> Result<Self> {
        let setup = |s: &TcpStream| -> std::io::Result<()> {
            s.set_nodelay(true)?;
            s.set_read_timeout(Some(IO_TIMEOUT))?;
            s.set_write_timeout(Some(IO_TIMEOUT))
        };
        setup(&stream).map_err(|e| ProtocolError::transport(0, e))?;
        Ok(Self {
            stream,
            sent: 0,
            received: 0,
        })
    }

    pub fn connect(addr: SocketAddr) -> Result<Self> {
        let stream = TcpStream::connect_timeout(&addr, IO_TIMEOUT).map_err(|e| ProtocolError::transport(0, e))?;
        Self::new(stream)
    }
}

impl Link for TcpLink {
    fn send_frame(&mut self, frame: &[u8]) -> Result<()> {
        self.stream
            .write_all(frame)
            .map_err(|e| ProtocolError::transport(self.sent, e))?;
        self.sent += frame.len() as u64;
        Ok(())
    }

    fn recv_frame(&mut self) -> Result<(Vec<u8>, u64)> {
        let offset = self.received;
        let mut frame = vec![0u8; HEADER_LEN];
        self.stream.read_exact(&mut frame).map_err(|e| {
            let reason = if e.kind() == ErrorKind::UnexpectedEof {
                "connection closed".to_string()
            } else {
                e.to_string()
            };
            ProtocolError::transport(offset, reason)
        })?;
        let (_, len) = decode_header(&frame).map_err(|e| ProtocolError::transport(offset, e))?;
        frame.resize(HEADER_LEN + len, 0);
        self.stream
            .read_exact(&mut frame[HEADER_LEN..])
            .map_err(|e| ProtocolError::transport(offset, e))?;
        self.received += frame.len() as u64;
        Ok((frame, offset))
    }
}

/// Listening side of the TCP transport.
pub struct TcpHub {
    listener: TcpListener,
}

impl TcpHub {
    /// Binds on localhost; port 0 picks a free port.
    pub fn bind(port: u16) -> Result<Self> {
        let listener = TcpListener::bind(("127.0.0.1", port)).map_err(|e| ProtocolError::transport(0, e))?;
        Ok(Self { listener })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(|e| ProtocolError::transport(0, e))
    }

    /// Accepts `count` connections, failing if they do not arrive in time.
    pub fn accept(&self, count: usize, timeout: Duration) -> Result<Vec<TcpLink>> {
        self.listener
            .set_nonblocking(true)
            .map_err(|e| ProtocolError::transport(0, e))?;
        let deadline = Instant::now() + timeout;
        let mut links = Vec::with_capacity(count);
        while links.len() < count {
            match self.listener.accept() {
                Ok((stream, _)) => {
                    stream
                        .set_nonblocking(false)
                        .map_err(|e| ProtocolError::transport(0, e))?;
                    links.push(TcpLink::new(stream)?);
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() > deadline {
                        return Err(ProtocolError::transport(
                            0,
                            format!("only {} of {count} workers connected", links.len()),
                        ));
                    }
                    std::thread::sleep(Duration::from_millis(1));
                }
                Err(e) => return Err(ProtocolError::transport(0, e)),
            }
        }
        Ok(links)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::ErrorMsg;

    #[test]
    fn inproc_round_trip_tracks_offsets() {
        let (mut a, mut b) = inproc_pair();
        let m = Message::Error(ErrorMsg {
            code: 1,
            text: "x".into(),
        });
        let len = send_message(&mut a, &m).unwrap();
        send_message(&mut a, &m).unwrap();
        assert_eq!(recv_message(&mut b).unwrap(), (m.clone(), len));
        let (_, off) = b.recv_frame().unwrap();
        assert_eq!(off, len as u64);
        drop(a);
        match recv_message(&mut b) {
            Err(ProtocolError::TransportFailure { frame_offset, .. }) => {
                assert_eq!(frame_offset, 2 * len as u64)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn corrupt_frame_is_a_transport_failure() {
        let (mut a, mut b) = inproc_pair();
        a.send_frame(b"DSDR\x01\x01\x00\x00\x00\x00").unwrap();
        assert!(matches!(
            recv_message(&mut b),
            Err(ProtocolError::TransportFailure { frame_offset: 0, .. })
        ));
    }

    #[test]
    fn tcp_round_trip() {
        let hub = TcpHub::bind(0).unwrap();
        let addr = hub.local_addr().unwrap();
        let m = Message::Error(ErrorMsg {
            code: 9,
            text: "hello".into(),
        });
        let sent = m.clone();
        let t = std::thread::spawn(move || {
            let mut c = TcpLink::connect(addr).unwrap();
            send_message(&mut c, &sent).unwrap();
            recv_message(&mut c).unwrap().0
        });
        let mut links = hub.accept(1, Duration::from_secs(10)).unwrap();
        let (got, _) = recv_message(&mut links[0]).unwrap();
        assert_eq!(got, m);
        send_message(&mut links[0], &got).unwrap();
        assert_eq!(t.join().unwrap(), m);
    }
}
