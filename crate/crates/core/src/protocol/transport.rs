//! Reliable, order-preserving carriers for [`ClassicalMessage`]s.

use std::io::{BufReader, BufWriter, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use super::message::ClassicalMessage;
use crate::error::{Error, Result};

pub trait Transport: Send {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()>;
    fn recv(&mut self) -> Result<ClassicalMessage>;
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()> {
        (**self).send(msg)
    }

    fn recv(&mut self) -> Result<ClassicalMessage> {
        (**self).recv()
    }
}

/// In-process queue pair; messages move without serialization.
pub struct QueueTransport {
    tx: Sender<ClassicalMessage>,
    rx: Receiver<ClassicalMessage>,
}

impl QueueTransport {
    pub fn pair() -> (Self, Self) {
        let (tx_a, rx_b) = channel();
        let (tx_b, rx_a) = channel();
        (Self { tx: tx_a, rx: rx_a }, Self { tx: tx_b, rx: rx_b })
    }
}

impl Transport for QueueTransport {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()> {
        self.tx.send(msg.clone()).map_err(|_| Error::Channel("peer endpoint closed".into()))
    }

    fn recv(&mut self) -> Result<ClassicalMessage> {
        self.rx.recv().map_err(|_| Error::Channel("peer endpoint closed".into()))
    }
}

/// Frames carried over any ordered byte stream.
pub struct StreamTransport<R: Read, W: Write> {
    reader: BufReader<R>,
    writer: BufWriter<W>,
}

impl<R: Read, W: Write> StreamTransport<R, W> {
    pub fn new(reader: R, writer: W) -> Self {
        Self { reader: BufReader::new(reader), writer: BufWriter::new(writer) }
    }
}

impl<R: Read + Send, W: Write + Send> Transport for StreamTransport<R, W> {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()> {
        msg.write_to(&mut self.writer).map_err(channel_err)?;
        self.writer.flush().map_err(|e| Error::Channel(e.to_string()))
    }

    fn recv(&mut self) -> Result<ClassicalMessage> {
        ClassicalMessage::read_from(&mut self.reader).map_err(channel_err)
    }
}

fn channel_err(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Channel(io.to_string()),
        other => other,
    }
}

pub type TcpTransport = StreamTransport<TcpStream, TcpStream>;

/// Connected loopback TCP pair.
pub fn tcp_pair() -> Result<(TcpTransport, TcpTransport)> {
    let listener = TcpListener::bind(("127.0.0.1", 0))?;
    let client = TcpStream::connect(listener.local_addr()?)?;
    let (server, _) = listener.accept()?;
    let wrap = |s: TcpStream| -> Result<TcpTransport> {
        s.set_nodelay(true)?;
        Ok(StreamTransport::new(s.try_clone()?, s))
    };
    Ok((wrap(client)?, wrap(server)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TransportKind {
    #[default]
    InProcess,
    ByteStream,
}

impl TransportKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::InProcess => "in-process",
            Self::ByteStream => "byte-stream",
        }
    }

    pub fn pair(self) -> Result<(Box<dyn Transport>, Box<dyn Transport>)> {
        Ok(match self {
            Self::InProcess => {
                let (a, b) = QueueTransport::pair();
                (Box::new(a), Box::new(b))
            }
            Self::ByteStream => {
                let (a, b) = tcp_pair()?;
                (Box::new(a), Box::new(b))
            }
        })
    }
}

impl FromStr for TransportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in-process" => Ok(Self::InProcess),
            "byte-stream" => Ok(Self::ByteStream),
            other => Err(Error::InvalidParameter(format!("unknown transport `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

pub type Transcript = Arc<Mutex<Vec<(Direction, ClassicalMessage)>>>;

/// Wraps a transport and records every message crossing it.
pub struct Recording<T> {
    inner: T,
    log: Transcript,
}

impl<T: Transport> Recording<T> {
    pub fn new(inner: T) -> (Self, Transcript) {
        let log = Transcript::default();
        (Self { inner, log: Arc::clone(&log) }, log)
    }
}

impl<T: Transport> Transport for Recording<T> {
    fn send(&mut self, msg: &ClassicalMessage) -> Result<()> {
        self.inner.send(msg)?;
        self.log.lock().unwrap().push((Direction::Sent, msg.clone()));
        Ok(())
    }

    fn recv(&mut self) -> Result<ClassicalMessage> {
        let msg = self.inner.recv()?;
        self.log.lock().unwrap().push((Direction::Received, msg.clone()));
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::message::MessageType;

    fn exchange(kind: TransportKind) {
        let (mut a, mut b) = kind.pair().unwrap();
        let msgs: Vec<_> = (0..50u32)
            .map(|i| ClassicalMessage::new(MessageType::Parities, (0..i as u8).collect()))
            .collect();
        std::thread::scope(|s| {
            s.spawn(|| {
                for m in &msgs {
                    a.send(m).unwrap();
                }
                let reply = a.recv().unwrap();
                assert_eq!(reply, ClassicalMessage::done(0));
            });
            for m in &msgs {
                assert_eq!(&b.recv().unwrap(), m);
            }
            b.send(&ClassicalMessage::done(0)).unwrap();
        });
    }

    #[test]
    fn queue_preserves_order() {
        exchange(TransportKind::InProcess);
    }

    #[test]
    fn tcp_preserves_order() {
        exchange(TransportKind::ByteStream);
    }

    #[test]
    fn closed_peer_is_channel_failure() {
        for kind in [TransportKind::InProcess, TransportKind::ByteStream] {
            let (mut a, b) = kind.pair().unwrap();
            drop(b);
            assert!(matches!(a.recv(), Err(Error::Channel(_))), "{kind:?}");
        }
    }

    #[test]
    fn recording_captures_both_directions() {
        let (a, mut b) = QueueTransport::pair();
        let (mut a, log) = Recording::new(a);
        a.send(&ClassicalMessage::done(1)).unwrap();
        b.recv().unwrap();
        b.send(&ClassicalMessage::done(2)).unwrap();
        a.recv().unwrap();
        let log = log.lock().unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(log[0].0, Direction::Sent);
        assert_eq!(log[1], (Direction::Received, ClassicalMessage::done(2)));
    }
}
