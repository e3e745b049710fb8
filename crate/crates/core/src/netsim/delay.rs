use crate::codec::Encoder;
use crate::config::Config;
use crate::consensus::Peer;
use crate::rng::Stream;

/// Wire id of a message endpoint; the client sits outside the validator range.
pub fn peer_code(p: Peer) -> u32 {
    match p {
        Peer::Client => u32::MAX,
        Peer::Node(v) => v.0,
    }
}

/// One-way delay in ms for message `seq` on the `from -> to` edge, sent at
/// `now_ms`. Uniform in `[1, delta]` after GST and `[1, 10 * delta]` before.
pub fn sample_delay(now_ms: u64, from: Peer, to: Peer, seq: u64, cfg: &Config) -> u64 {
    let bound = if now_ms >= cfg.gst_ms {
        cfg.delta_net_ms
    } else {
        10 * cfg.delta_net_ms
    };
    let mut key = Encoder::tagged("posn/delay");
    key.u64(cfg.master_seed)
        .u32(peer_code(from))
        .u32(peer_code(to))
        .u64(seq);
    Stream::from_key(key.digest()).range_inclusive(1, bound.max(1))
}
