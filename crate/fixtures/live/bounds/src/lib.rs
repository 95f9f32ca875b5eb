pub fn above(x: i32) -> bool {
    if x > 10 {
        return true;
    }
    false
}

pub fn in_range(x: i32) -> &'static str {
    if x >= 0 && x <= 10 { "in" } else { "out" }
}
