use nalgebra::DMatrix;
use neuroarm_core::transport::tcp::TcpOutlet;
use neuroarm_core::transport::{
    measure_stats, open_inlet, open_outlet, open_outlet_with, stream_pair, Chunk, OutletOptions, StreamHeader,
    TransportError,
};
use proptest::prelude::*;
use std::thread;
use std::time::{Duration, Instant};

fn ramp(ch: usize, start: usize, n: usize) -> DMatrix<f32> {
    DMatrix::from_fn(ch, n, |c, j| ((start + j) * 100 + c) as f32)
}

#[test]
fn resolve_by_name_and_header_round_trip() {
    let header = StreamHeader::new("t-resolve", 16, 125.0);
    let _outlet = open_outlet(header.clone()).unwrap();
    let inlet = open_inlet("t-resolve", Duration::from_secs(1)).unwrap();
    assert_eq!(inlet.header(), &header);
}

#[test]
fn unknown_name_times_out() {
    let t = Instant::now();
    let err = open_inlet("t-nobody", Duration::from_millis(500)).unwrap_err();
    assert!(matches!(err, TransportError::ResolveTimeout(_)));
    assert!(t.elapsed() >= Duration::from_millis(500));
}

#[test]
fn duplicate_outlet_rejected() {
    let _a = open_outlet(StreamHeader::new("t-dup", 2, 125.0)).unwrap();
    let err = open_outlet(StreamHeader::new("t-dup", 2, 125.0)).unwrap_err();
    assert!(matches!(err, TransportError::NameCollision(_)));
}

#[test]
fn name_released_when_outlet_dropped() {
    drop(open_outlet(StreamHeader::new("t-reuse", 2, 125.0)).unwrap());
    open_outlet(StreamHeader::new("t-reuse", 2, 125.0)).unwrap();
}

#[test]
fn fifo_concatenation() {
    let (mut out, mut inlet) = stream_pair(StreamHeader::new("t-fifo", 4, 125.0), OutletOptions::default()).unwrap();
    for k in 0..10 {
        out.push_samples(ramp(4, k * 15, 15)).unwrap();
    }
    let w = inlet.pull_window(150, Duration::from_millis(100)).unwrap();
    assert_eq!(w.samples, ramp(4, 0, 150));
    assert_eq!(w.seq, 0);
}

#[test]
fn empty_pull_times_out_on_schedule() {
    let (_out, mut inlet) = stream_pair(StreamHeader::new("t-timeout", 4, 125.0), OutletOptions::default()).unwrap();
    let t = Instant::now();
    let err = inlet.pull_window(150, Duration::from_millis(50)).unwrap_err();
    let dt = t.elapsed().as_secs_f64() * 1e3;
    assert!(matches!(err, TransportError::Timeout { requested: 150, available: 0 }));
    assert!((40.0..=60.0).contains(&dt), "{dt} ms");
}

#[test]
fn partial_data_is_not_consumed_on_timeout() {
    let (mut out, mut inlet) = stream_pair(StreamHeader::new("t-partial", 1, 125.0), OutletOptions::default()).unwrap();
    out.push_samples(ramp(1, 0, 10)).unwrap();
    assert!(inlet.pull_window(20, Duration::from_millis(10)).is_err());
    out.push_samples(ramp(1, 10, 10)).unwrap();
    assert_eq!(inlet.pull_window(20, Duration::from_millis(10)).unwrap().samples, ramp(1, 0, 20));
}

#[test]
fn decreasing_seq_rejected_without_counting_drops() {
    let (mut out, mut inlet) = stream_pair(StreamHeader::new("t-seq", 1, 125.0), OutletOptions::default()).unwrap();
    out.push_chunk(Chunk { t0: 0.0, seq: 0, samples: ramp(1, 0, 8) }).unwrap();
    let err = out.push_chunk(Chunk { t0: 0.1, seq: 4, samples: ramp(1, 8, 8) }).unwrap_err();
    assert!(matches!(err, TransportError::NonMonotonicSeq { .. }));
    assert_eq!(out.discarded_chunks(), 0);
    inlet.pull_window(8, Duration::from_millis(10)).unwrap();
    assert_eq!(inlet.stats().dropped, 0);
    out.push_chunk(Chunk { t0: 0.2, seq: 16, samples: ramp(1, 16, 8) }).unwrap();
    inlet.pull_window(8, Duration::from_millis(10)).unwrap();
    assert_eq!(inlet.stats().dropped, 8, "seq 8..16 never arrived");
    let err = out.push_chunk(Chunk { t0: -1.0, seq: 24, samples: ramp(1, 8, 8) }).unwrap_err();
    assert!(matches!(err, TransportError::NonMonotonicTime { .. }));
    assert!(matches!(
        out.push_chunk(Chunk { t0: 1.0, seq: 24, samples: ramp(2, 8, 8) }),
        Err(TransportError::Shape { .. })
    ));
}

#[test]
fn closed_stream_reports_closed() {
    let (out, mut inlet) = stream_pair(StreamHeader::new("t-closed", 1, 125.0), OutletOptions::default()).unwrap();
    drop(out);
    assert!(matches!(inlet.pull_window(1, Duration::from_millis(10)), Err(TransportError::Closed)));
}

#[test]
fn fault_injection_drop_count() {
    let opts = OutletOptions { drop_every: Some(5), ..OutletOptions::default() };
    let (mut out, mut inlet) = stream_pair(StreamHeader::new("t-drop", 2, 125.0), opts).unwrap();
    let chunk = 8;
    for k in 0..100 {
        out.push_samples(ramp(2, k * chunk, chunk)).unwrap();
    }
    // the last push is discarded too; a trailing marker makes that gap visible
    out.push_samples(ramp(2, 0, 1)).unwrap();
    drop(out);
    while inlet.pull_available(Duration::from_millis(10)).is_ok() {}
    let stats = inlet.stats();
    assert_eq!(stats.dropped, 20 * chunk as u64);
}

#[test]
fn zero_pushes_zero_rate() {
    let (_out, mut inlet) = stream_pair(StreamHeader::new("t-idle", 2, 125.0), OutletOptions::default()).unwrap();
    let s = measure_stats(&mut inlet, 1.0).unwrap();
    assert_eq!(s.effective_rate, 0.0);
    assert_eq!(s.dropped, 0);
    assert!(measure_stats(&mut inlet, 0.5).is_err());
}

#[test]
fn tcp_loopback_delivers_in_order() {
    let header = StreamHeader::new("t-tcp", 3, 125.0);
    let mut out = TcpOutlet::bind(header.clone(), OutletOptions::default(), "127.0.0.1:0").unwrap();
    let mut inlet = open_inlet("t-tcp", Duration::from_secs(1)).unwrap();
    assert_eq!(inlet.header(), &header);
    for k in 0..20 {
        out.outlet().push_samples(ramp(3, k * 8, 8)).unwrap();
    }
    let w = inlet.pull_window(160, Duration::from_secs(2)).unwrap();
    assert_eq!(w.samples, ramp(3, 0, 160));
    drop(out);
    assert!(matches!(inlet.pull_window(1, Duration::from_secs(2)), Err(TransportError::Closed)));
}

#[test]
fn tcp_preserves_drop_accounting() {
    let opts = OutletOptions { drop_every: Some(4), ..OutletOptions::default() };
    let mut out = TcpOutlet::bind(StreamHeader::new("t-tcp-drop", 2, 125.0), opts, "127.0.0.1:0").unwrap();
    let mut inlet = open_inlet("t-tcp-drop", Duration::from_secs(1)).unwrap();
    for k in 0..41 {
        out.outlet().push_samples(ramp(2, k * 8, 8)).unwrap();
    }
    drop(out);
    while inlet.pull_available(Duration::from_secs(1)).is_ok() {}
    assert_eq!(inlet.stats().dropped, 10 * 8);
}

/// 60 s of 8-sample chunks at 125 Hz × 16 channels on an absolute schedule.
#[test]
fn paced_stream_sixty_seconds_no_loss() {
    let header = StreamHeader::new("t-paced", 16, 125.0);
    let mut out = open_outlet(header).unwrap();
    let mut inlet = open_inlet("t-paced", Duration::from_secs(1)).unwrap();
    let producer = thread::spawn(move || {
        let start = Instant::now();
        let period = Duration::from_secs_f64(8.0 / 125.0);
        for k in 0..(60 * 125 / 8 + 2) {
            let due = start + period * k as u32;
            if let Some(d) = due.checked_duration_since(Instant::now()) {
                thread::sleep(d);
            }
            out.push_samples(ramp(16, k * 8, 8)).unwrap();
        }
        out
    });
    let stats = measure_stats(&mut inlet, 60.0).unwrap();
    let _out = producer.join().unwrap();
    println!("paced stream: {stats:?}");
    assert_eq!(stats.dropped, 0);
    assert!((124.0..=126.0).contains(&stats.effective_rate), "{}", stats.effective_rate);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_chunking_preserves_order(sizes in prop::collection::vec(1usize..20, 1..30), pulls in prop::collection::vec(1usize..25, 1..40)) {
        let (mut out, mut inlet) = stream_pair(StreamHeader::new("t-prop", 2, 125.0), OutletOptions::default()).unwrap();
        let total: usize = sizes.iter().sum();
        let mut pos = 0;
        for s in &sizes {
            out.push_samples(ramp(2, pos, *s)).unwrap();
            pos += s;
        }
        let mut got = 0;
        let mut last_t0 = f64::NEG_INFINITY;
        for p in pulls.iter().cycle() {
            if got == total {
                break;
            }
            let n = (*p).min(total - got);
            let w = inlet.pull_window(n, Duration::from_millis(10)).unwrap();
            prop_assert_eq!(&w.samples, &ramp(2, got, n));
            prop_assert_eq!(w.seq, got as u64);
            prop_assert!(w.t0 >= last_t0);
            last_t0 = w.t0;
            got += n;
        }
        prop_assert_eq!(inlet.stats().dropped, 0);
    }
}

#[test]
fn lossy_link_loses_samples() {
    let opts = OutletOptions { drop_prob: 0.8, seed: 1, ..OutletOptions::default() };
    let mut out = open_outlet_with(StreamHeader::new("t-lossy", 1, 125.0), opts).unwrap();
    let mut inlet = open_inlet("t-lossy", Duration::from_secs(1)).unwrap();
    for k in 0..500 {
        out.push_samples(ramp(1, k * 8, 8)).unwrap();
    }
    drop(out);
    while inlet.pull_available(Duration::from_millis(10)).is_ok() {}
    let dropped = inlet.stats().dropped;
    assert!(dropped > 2000 && dropped < 4000, "{dropped}");
}
