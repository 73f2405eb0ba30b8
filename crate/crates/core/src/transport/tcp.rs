//! Loopback socket transport using the [`wire`](super::wire) framing.
//!
//! A [`TcpOutlet`] buffers pushes locally and a writer thread forwards them
//! to the first client that connects. Inlets resolved to a TCP endpoint run
//! a reader thread that decodes frames into a local buffer, so the [`Inlet`]
//! API is unchanged.

use super::buffer::{stream_pair, Inlet, Outlet, OutletOptions};
use super::registry::{register, unregister, Endpoint};
use super::wire::{read_frame, read_preamble, write_frame, write_preamble};
use super::{Chunk, StreamHeader, TransportError};
use std::io::{BufReader, BufWriter, ErrorKind, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

pub struct TcpOutlet {
    outlet: Option<Outlet>,
    addr: SocketAddr,
    name: String,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
}

impl TcpOutlet {
    /// Binds `bind` (use port 0 for an ephemeral port) and registers the
    /// stream name.
    pub fn bind(header: StreamHeader, opts: OutletOptions, bind: &str) -> Result<Self, TransportError> {
        header.validate()?;
        let listener = TcpListener::bind(bind)?;
        let addr = listener.local_addr()?;
        register(&header.name, Endpoint::Tcp(addr))?;
        let (outlet, inlet) = match stream_pair(header.clone(), opts) {
            Ok(p) => p,
            Err(e) => {
                unregister(&header.name);
                return Err(e);
            }
        };
        let stop = Arc::new(AtomicBool::new(false));
        let stop2 = Arc::clone(&stop);
        let worker = std::thread::Builder::new()
            .name(format!("tcp-outlet-{}", header.name))
            .spawn(move || serve_one(listener, header, inlet, stop2))?;
        Ok(Self { outlet: Some(outlet), addr, name: String::new(), stop, worker: Some(worker) }.named())
    }

    fn named(mut self) -> Self {
        self.name = self.outlet.as_ref().unwrap().header().name.clone();
        self
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn outlet(&mut self) -> &mut Outlet {
        self.outlet.as_mut().expect("outlet alive")
    }

    pub fn push_chunk(&mut self, chunk: Chunk) -> Result<(), TransportError> {
        self.outlet().push_chunk(chunk)
    }
}

impl Drop for TcpOutlet {
    fn drop(&mut self) {
        // Closing the local outlet lets the writer drain and exit.
        self.outlet.take();
        unregister(&self.name);
        if let Some(w) = self.worker.take() {
            // The writer may still be waiting for a client.
            self.stop.store(true, Ordering::SeqCst);
            let _ = w.join();
        }
    }
}

fn serve_one(listener: TcpListener, header: StreamHeader, mut inlet: Inlet, stop: Arc<AtomicBool>) {
    if listener.set_nonblocking(true).is_err() {
        return;
    }
    let stream = loop {
        match listener.accept() {
            Ok((s, _)) => break s,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                std::thread::sleep(Duration::from_millis(5));
            }
            Err(_) => return,
        }
    };
    let _ = stream.set_nonblocking(false);
    let _ = stream.set_nodelay(true);
    let mut w = BufWriter::new(stream);
    if write_preamble(&mut w, &header).is_err() || w.flush().is_err() {
        return;
    }
    loop {
        match inlet.pull_chunk(Duration::from_millis(20)) {
            Ok(Some(chunk)) => {
                if write_frame(&mut w, &chunk).is_err() || w.flush().is_err() {
                    return;
                }
            }
            Ok(None) => {}
            Err(_) => return,
        }
    }
}

pub(crate) fn connect_inlet(addr: SocketAddr, timeout: Duration) -> Result<Inlet, TransportError> {
    let stream = TcpStream::connect_timeout(&addr, timeout)?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(timeout))?;
    let mut reader = BufReader::new(stream);
    let header = read_preamble(&mut reader)?;
    reader.get_ref().set_read_timeout(None)?;
    let (mut outlet, mut inlet) = stream_pair(header.clone(), OutletOptions::default())?;
    let n_channels = header.n_channels;
    let worker = std::thread::Builder::new()
        .name(format!("tcp-inlet-{}", header.name))
        .spawn(move || {
            while let Ok(Some(chunk)) = read_frame(&mut reader, n_channels) {
                if outlet.push_chunk(chunk).is_err() {
                    break;
                }
            }
            // Dropping the outlet marks the local stream closed.
        })?;
    inlet.attach_worker(worker);
    Ok(inlet)
}
