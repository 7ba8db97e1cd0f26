//! Point-to-point transports used by the router.

use std::collections::VecDeque;
use std::io::{self, Read, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport closed")]
    Closed,
    #[error("no frame available")]
    Empty,
    #[error("frame of {0} bytes exceeds the u32 length prefix")]
    FrameTooLarge(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Transport: Send {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError>;
    fn recv(&mut self) -> Result<Vec<u8>, TransportError>;
    fn close(&mut self);
}

/// FIFO of whole frames.
#[derive(Debug, Default)]
pub struct InMemoryTransport {
    queue: VecDeque<Vec<u8>>,
    closed: bool,
}

impl InMemoryTransport {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Transport for InMemoryTransport {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        self.queue.push_back(frame.to_vec());
        Ok(())
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        match self.queue.pop_front() {
            Some(frame) => Ok(frame),
            None if self.closed => Err(TransportError::Closed),
            None => Err(TransportError::Empty),
        }
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> Result<(), TransportError> {
    let len = u32::try_from(frame.len()).map_err(|_| TransportError::FrameTooLarge(frame.len()))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(frame)?;
    w.flush()?;
    Ok(())
}

/// Reads one `u32`-length-prefixed frame. A clean end of stream before the
/// prefix reports `Closed`.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Vec<u8>, TransportError> {
    let mut prefix = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut prefix[got..])? {
            0 if got == 0 => return Err(TransportError::Closed),
            0 => return Err(io::Error::from(io::ErrorKind::UnexpectedEof).into()),
            k => got += k,
        }
    }
    let mut frame = vec![0u8; u32::from_be_bytes(prefix) as usize];
    r.read_exact(&mut frame)?;
    Ok(frame)
}

/// Length-prefixed frames over any byte stream (a socket, a pipe, ...).
pub struct FramedTransport<S> {
    stream: S,
    closed: bool,
}

impl<S: Read + Write + Send> FramedTransport<S> {
    pub fn new(stream: S) -> Self {
        Self {
            stream,
            closed: false,
        }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl<S: Read + Write + Send> Transport for FramedTransport<S> {
    fn send(&mut self, frame: &[u8]) -> Result<(), TransportError> {
        if self.closed {
            return Err(TransportError::Closed);
        }
        write_frame(&mut self.stream, frame)
    }

    fn recv(&mut self) -> Result<Vec<u8>, TransportError> {
        read_frame(&mut self.stream)
    }

    fn close(&mut self) {
        self.closed = true;
    }
}

/// In-process byte pipe: whatever is written can be read back in order.
#[derive(Debug, Default)]
pub struct LoopbackStream {
    buf: VecDeque<u8>,
}

impl LoopbackStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

impl Read for LoopbackStream {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let n = out.len().min(self.buf.len());
        for (dst, src) in out.iter_mut().zip(self.buf.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

impl Write for LoopbackStream {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        self.buf.extend(data);
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn in_memory_fifo_and_close() {
        let mut t = InMemoryTransport::new();
        t.send(b"one").unwrap();
        t.send(b"two").unwrap();
        assert_eq!(t.recv().unwrap(), b"one");
        assert!(matches!(t.recv(), Ok(ref f) if f == b"two"));
        assert!(matches!(t.recv(), Err(TransportError::Empty)));
        t.close();
        assert!(matches!(t.send(b"x"), Err(TransportError::Closed)));
        assert!(matches!(t.recv(), Err(TransportError::Closed)));
    }

    #[test]
    fn framing_separates_back_to_back_frames() {
        let mut t = FramedTransport::new(LoopbackStream::new());
        t.send(b"first frame").unwrap();
        t.send(b"").unwrap();
        t.send(&[7u8; 1000]).unwrap();
        assert_eq!(t.recv().unwrap(), b"first frame");
        assert_eq!(t.recv().unwrap(), b"");
        assert_eq!(t.recv().unwrap(), vec![7u8; 1000]);
        assert!(matches!(t.recv(), Err(TransportError::Closed)));
    }

    #[test]
    fn partial_frame_is_an_error() {
        let mut s = LoopbackStream::new();
        s.write_all(&10u32.to_be_bytes()).unwrap();
        s.write_all(b"short").unwrap();
        assert!(matches!(read_frame(&mut s), Err(TransportError::Io(_))));
        let mut s = LoopbackStream::new();
        s.write_all(&[0, 0]).unwrap();
        assert!(matches!(read_frame(&mut s), Err(TransportError::Io(_))));
    }
}
