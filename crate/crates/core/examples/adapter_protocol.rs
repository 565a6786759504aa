//! The line protocol spoken with external detector adapters, driven in
//! process: a handshake, then one response per tile request.
//!
//! ```text
//! cargo run --example adapter_protocol
//! ```
//! A real adapter is any program doing the same on stdin/stdout, for example
//! `sartriage adapter --capacity 4`, passed to `sartriage detect --adapter-cmd`.

use sartriage::detect::protocol::{parse_handshake, parse_response, serve_adapter, TileRequest};
use sartriage::detect::SyntheticBackend;
use sartriage::synth::{green_field, save_png, PATCH_MAGENTA};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let mut tile = green_field(512, 512, 0.02, 1);
    tile.fill_rect(100, 120, 16, 32, PATCH_MAGENTA);
    let path = dir.path().join("tile.png");
    save_png(&tile, &path)?;

    let requests = [
        TileRequest { tile_id: "img#0".into(), image_path: path.display().to_string() },
        TileRequest { tile_id: "img#1".into(), image_path: dir.path().join("gone.png").display().to_string() },
    ];
    let input: String = requests.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
    print!("> {}", input.replace('\n', "\n> ").trim_end_matches("> "));

    let mut output = Vec::new();
    serve_adapter(input.as_bytes(), &mut output, 2, SyntheticBackend::detect_tile)?;
    let text = String::from_utf8(output)?;
    let mut lines = text.lines();
    let hs = parse_handshake(lines.next().unwrap_or_default())?;
    println!("< handshake: protocol {} capacity {}", hs.protocol, hs.capacity);
    for line in lines {
        let r = parse_response(line)?;
        println!("< {} -> {} boxes, error {:?}", r.tile_id, r.boxes.len(), r.error);
    }
    Ok(())
}
