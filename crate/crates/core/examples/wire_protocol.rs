//! Status frames through the binary codec and a lossy, delayed channel.

use quayfleet::comms::{decode, encode, Channel, ChannelModel, Endpoint, Message, Payload, StatusReport};
use quayfleet::navigation::PoseEstimate;
use quayfleet::supervisor::Pose;
use quayfleet::vehicle::Mode;

fn main() {
    let mut channel = Channel::new(ChannelModel { latency: 0.05, loss_rate: 0.2, seed: 7 });
    for seq in 1..=10u64 {
        let t = seq as f64;
        let status = StatusReport {
            t,
            estimate: PoseEstimate::exact(Pose::new(4.0 * t, 8.0, 0.0)),
            mode: Mode::MoveToTarget,
            speed: 4.0,
            battery_wh: 216_000.0 - t,
            path_progress: 4.0 * t,
            revision: Some(1),
            completed_revision: None,
        };
        let msg = Message { seq, sender: Endpoint::Vehicle(3), recipient: Endpoint::Supervisor, payload: Payload::Status(status) };
        let frame = encode(&msg);
        assert_eq!(decode(&frame).unwrap(), msg);
        if seq == 1 {
            println!("status frame is {} bytes: {}", frame.len(), hex::encode(&frame[..16]));
        }
        channel.send(msg, t);
    }
    let got = channel.poll(Endpoint::Supervisor, 100.0);
    println!("sent {}, dropped {}, delivered seq {:?}", channel.sent, channel.dropped, got.iter().map(|m| m.seq).collect::<Vec<_>>());
    println!("truncated frame: {:?}", decode(&[1, 9, 0, 0, 0, 1]).unwrap_err());
}
