//! Request/response transports.

use std::io::{BufReader, BufWriter};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::Duration;

use super::server::{Server, ServerSession};
use super::wire::{read_frame, write_frame, Message};
use super::ProtocolError;

/// Carries one request frame and returns the response frame.
pub trait Transport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>, ProtocolError>;

    /// Modelled network time accumulated so far. Real transports report zero.
    fn network_delay(&self) -> Duration {
        Duration::ZERO
    }
}

impl<T: Transport + ?Sized> Transport for Box<T> {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        (**self).exchange(request)
    }
    fn network_delay(&self) -> Duration {
        (**self).network_delay()
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl TcpTransport {
    pub fn connect<A: ToSocketAddrs>(addr: A) -> Result<Self, ProtocolError> {
        let stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        Ok(TcpTransport { reader: BufReader::new(stream.try_clone()?), writer: BufWriter::new(stream) })
    }
}

impl Transport for TcpTransport {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        write_frame(&mut self.writer, request)?;
        read_frame(&mut self.reader)?.ok_or(ProtocolError::Closed)
    }
}

/// Calls a server session directly, still going through frame encoding.
pub struct InProcess {
    session: ServerSession,
}

impl InProcess {
    pub fn new(server: &std::sync::Arc<Server>) -> Self {
        InProcess { session: server.session() }
    }
}

impl Transport for InProcess {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        let reply = match Message::from_frame(request) {
            Ok(m) => self.session.handle(m),
            Err(e) => Message::error(super::wire::code::MALFORMED, e.to_string()),
        };
        Ok(reply.to_frame())
    }
}

/// Serialisation plus propagation delay of one message.
pub fn message_delay(bytes: usize, bandwidth: f64, rtt: f64) -> Duration {
    Duration::from_secs_f64((bytes * 8) as f64 / bandwidth + rtt / 2.0)
}

/// Wraps a transport and accounts for a link of fixed bandwidth and
/// round-trip time without sleeping.
pub struct Simulated<T> {
    inner: T,
    bandwidth: f64,
    rtt: f64,
    delay: Duration,
    bytes_sent: u64,
    bytes_received: u64,
}

impl<T: Transport> Simulated<T> {
    /// `bandwidth` in bits per second, `rtt` in seconds.
    pub fn new(inner: T, bandwidth: f64, rtt: f64) -> Self {
        Simulated { inner, bandwidth, rtt, delay: Duration::ZERO, bytes_sent: 0, bytes_received: 0 }
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn rtt(&self) -> f64 {
        self.rtt
    }

    pub fn set_link(&mut self, bandwidth: f64, rtt: f64) {
        self.bandwidth = bandwidth;
        self.rtt = rtt;
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    pub fn bytes_received(&self) -> u64 {
        self.bytes_received
    }

    pub fn into_inner(self) -> T {
        self.inner
    }
}

impl<T: Transport> Transport for Simulated<T> {
    fn exchange(&mut self, request: &[u8]) -> Result<Vec<u8>, ProtocolError> {
        self.delay += message_delay(request.len(), self.bandwidth, self.rtt);
        self.bytes_sent += request.len() as u64;
        let reply = self.inner.exchange(request)?;
        self.delay += message_delay(reply.len(), self.bandwidth, self.rtt);
        self.bytes_received += reply.len() as u64;
        Ok(reply)
    }

    fn network_delay(&self) -> Duration {
        self.delay + self.inner.network_delay()
    }
}
