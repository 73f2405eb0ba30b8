use super::buffer::Shared;
use super::{tcp, Inlet, Outlet, OutletOptions, StreamHeader, TransportError};
use once_cell::sync::Lazy;
use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

#[derive(Clone)]
pub(crate) enum Endpoint {
    Local(Arc<Shared>),
    Tcp(SocketAddr),
}

static REGISTRY: Lazy<Mutex<HashMap<String, Endpoint>>> = Lazy::new(|| Mutex::new(HashMap::new()));

pub(crate) fn register(name: &str, ep: Endpoint) -> Result<(), TransportError> {
    let mut reg = REGISTRY.lock().unwrap();
    if reg.contains_key(name) {
        return Err(TransportError::NameCollision(name.to_string()));
    }
    reg.insert(name.to_string(), ep);
    Ok(())
}

pub(crate) fn unregister(name: &str) {
    REGISTRY.lock().unwrap().remove(name);
}

fn lookup(name: &str) -> Option<Endpoint> {
    REGISTRY.lock().unwrap().get(name).cloned()
}

/// Opens an in-process outlet registered under `header.name`.
pub fn open_outlet(header: StreamHeader) -> Result<Outlet, TransportError> {
    open_outlet_with(header, OutletOptions::default())
}

pub fn open_outlet_with(header: StreamHeader, opts: OutletOptions) -> Result<Outlet, TransportError> {
    header.validate()?;
    let shared = Shared::new(header.clone(), opts.capacity_samples);
    register(&header.name, Endpoint::Local(Arc::clone(&shared)))?;
    let mut outlet = Outlet::new(shared, opts);
    let name = header.name.clone();
    outlet.set_on_close(Box::new(move || unregister(&name)));
    Ok(outlet)
}

/// Resolves a stream by name, polling until `timeout`.
pub fn open_inlet(name: &str, timeout: Duration) -> Result<Inlet, TransportError> {
    let deadline = Instant::now() + timeout;
    loop {
        match lookup(name) {
            Some(Endpoint::Local(shared)) => return Inlet::new(shared),
            Some(Endpoint::Tcp(addr)) => {
                let remaining = deadline.saturating_duration_since(Instant::now()).max(Duration::from_millis(100));
                return tcp::connect_inlet(addr, remaining);
            }
            None => {}
        }
        if Instant::now() >= deadline {
            return Err(TransportError::ResolveTimeout(name.to_string()));
        }
        std::thread::sleep(Duration::from_millis(2));
    }
}
