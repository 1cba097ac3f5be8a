//! Parse an ABI, validate textual calls against it and round-trip calldata.
//!
//! ```text
//! cargo run --example abi_calls
//! ```

use seqfuzz::abi::{decode_call, encode_call, parse_abi, validate_call, AbiValue, RawCall};

const ABI: &str = r#"[
  {"type":"function","name":"transfer","inputs":[{"name":"to","type":"address"},{"name":"amount","type":"uint256"}],"stateMutability":"nonpayable"},
  {"type":"function","name":"batch","inputs":[{"name":"ids","type":"uint16[]"},{"name":"tag","type":"bytes"}],"stateMutability":"payable"}
]"#;

fn call(name: &str, args: &[&str]) -> RawCall {
    RawCall {
        name: name.into(),
        args: args.iter().map(|s| s.to_string()).collect(),
    }
}

fn main() {
    let fns = parse_abi(ABI).unwrap();
    for f in &fns {
        println!("{} selector 0x{}", f.signature(), hex::encode(f.selector));
    }
    let raws = [
        call("transfer", &["0x3333333333333333333333333333333333333333", "1000"]),
        call("batch", &["[1, 2, 65535]", "0xdeadbeef"]),
        // Short addresses are padded and out-of-range integers reduced.
        call("transfer", &["0x33", "-1"]),
        call("transfer", &["0x33"]),
        call("mint", &["1"]),
    ];
    for raw in &raws {
        match validate_call(&fns, raw) {
            Ok(v) => {
                let data = encode_call(&v.function, &v.args).unwrap();
                let back = decode_call(&v.function, &data).unwrap();
                let shown: Vec<String> = back.iter().map(AbiValue::literal).collect();
                println!("ok   {}({}) -> {} bytes of calldata", raw.name, shown.join(", "), data.len());
                assert_eq!(back, v.args);
            }
            Err(defects) => {
                let msgs: Vec<String> = defects.iter().map(ToString::to_string).collect();
                println!("bad  {}({}): {}", raw.name, raw.args.join(", "), msgs.join("; "));
            }
        }
    }
}
