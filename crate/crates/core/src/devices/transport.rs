//! Datagram transports. The client only needs "send to address" and "next
//! datagram from address"; UDP and an in-process loop both provide that.

use std::collections::{HashMap, VecDeque};
use std::io::ErrorKind;
use std::net::UdpSocket;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::virtual_device::VirtualDevice;
use super::DeviceError;

pub trait Transport: Send + Sync {
    fn send(&self, address: &str, packet: &[u8]) -> Result<(), DeviceError>;
    /// Next datagram from `address`, or `None` once `timeout` elapses.
    fn recv(&self, address: &str, timeout: Duration) -> Result<Option<Vec<u8>>, DeviceError>;
}

/// One connected loopback socket per device address. Datagrams that arrive
/// late (replayed responses) stay queued and are filtered by request id.
#[derive(Default)]
pub struct UdpTransport {
    sockets: Mutex<HashMap<String, Arc<UdpSocket>>>,
}

impl UdpTransport {
    pub fn new() -> Self {
        Self::default()
    }

    fn socket(&self, address: &str) -> Result<Arc<UdpSocket>, DeviceError> {
        let mut map = self.sockets.lock().expect("socket map");
        if let Some(s) = map.get(address) {
            return Ok(s.clone());
        }
        let s = UdpSocket::bind("127.0.0.1:0")?;
        s.connect(address)?;
        let s = Arc::new(s);
        map.insert(address.to_string(), s.clone());
        Ok(s)
    }
}

impl Transport for UdpTransport {
    fn send(&self, address: &str, packet: &[u8]) -> Result<(), DeviceError> {
        match self.socket(address)?.send(packet) {
            Ok(_) => Ok(()),
            // ICMP unreachable from an earlier datagram surfaces here
            Err(e) if e.kind() == ErrorKind::ConnectionRefused => Ok(()),
            Err(e) => Err(e.into()),
        }
    }

    fn recv(&self, address: &str, timeout: Duration) -> Result<Option<Vec<u8>>, DeviceError> {
        let s = self.socket(address)?;
        s.set_read_timeout(Some(timeout.max(Duration::from_millis(1))))?;
        let mut buf = vec![0u8; 65_536];
        match s.recv(&mut buf) {
            Ok(n) => {
                buf.truncate(n);
                Ok(Some(buf))
            }
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut | ErrorKind::ConnectionRefused) => {
                Ok(None)
            }
            Err(e) => Err(e.into()),
        }
    }
}

/// Calls the virtual device directly; a missing reply is an immediate
/// timeout, so fault-injection tests do not sleep.
#[derive(Default)]
pub struct InProcessTransport {
    devices: HashMap<String, Arc<VirtualDevice>>,
    inbox: Mutex<HashMap<String, VecDeque<Vec<u8>>>>,
}

impl InProcessTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&mut self, address: &str, device: Arc<VirtualDevice>) {
        self.devices.insert(address.to_string(), device);
    }
}

impl Transport for InProcessTransport {
    fn send(&self, address: &str, packet: &[u8]) -> Result<(), DeviceError> {
        if let Some(d) = self.devices.get(address) {
            let replies = d.handle(packet);
            self.inbox.lock().expect("inbox").entry(address.to_string()).or_default().extend(replies);
        }
        Ok(())
    }

    fn recv(&self, address: &str, _timeout: Duration) -> Result<Option<Vec<u8>>, DeviceError> {
        Ok(self.inbox.lock().expect("inbox").get_mut(address).and_then(|q| q.pop_front()))
    }
}
