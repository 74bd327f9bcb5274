fn add0(a: i32, b: i32) -> i32 { (a + b).wrapping_add(1) }

fn sub1(a: i32) -> i32 { a.wrapping_sub(2) }

fn mul2(a: i32, b: i32) -> i32 { if a > b { a.wrapping_mul(3) } else { b } }

fn xor3(a: i64) -> i64 { a ^ 7 }

fn and4(a: i32, b: i32) -> i32 { (a & b).wrapping_add(2) }

fn or5(a: i32) -> i32 { a | 3 }

fn add6(a: i32, b: i32) -> i32 { if a > b { a.wrapping_add(2) } else { b } }

fn sub7(a: i64) -> i64 { a.wrapping_sub(21) }

fn mul8(a: i32, b: i32) -> i32 { (a * b).wrapping_add(4) }

fn xor9(a: i32) -> i32 { a ^ 2 }

fn and10(a: i32, b: i32) -> i32 { if a > b { a & 3 } else { b } }

fn or11(a: i64) -> i64 { a | 28 }

fn add12(a: i32, b: i32) -> i32 { (a + b).wrapping_add(3) }

fn sub13(a: i32) -> i32 { a.wrapping_sub(4) }

fn mul14(a: i32, b: i32) -> i32 { if a > b { a.wrapping_mul(5) } else { b } }

fn xor15(a: i64) -> i64 { a ^ 21 }

fn and16(a: i32, b: i32) -> i32 { (a & b).wrapping_add(4) }

fn or17(a: i32) -> i32 { a | 5 }

fn add18(a: i32, b: i32) -> i32 { if a > b { a.wrapping_add(4) } else { b } }

fn sub19(a: i64) -> i64 { a.wrapping_sub(35) }

fn mul20(a: i32, b: i32) -> i32 { (a * b).wrapping_add(6) }

fn xor21(a: i32) -> i32 { a ^ 4 }

fn and22(a: i32, b: i32) -> i32 { if a > b { a & 5 } else { b } }

fn or23(a: i64) -> i64 { a | 42 }

fn add24(a: i32, b: i32) -> i32 { (a + b).wrapping_add(5) }

fn sub25(a: i32) -> i32 { a.wrapping_sub(6) }

fn mul26(a: i32, b: i32) -> i32 { if a > b { a.wrapping_mul(7) } else { b } }

fn xor27(a: i64) -> i64 { a ^ 35 }

fn and28(a: i32, b: i32) -> i32 { (a & b).wrapping_add(6) }

fn or29(a: i32) -> i32 { a | 7 }

fn add30(a: i32, b: i32) -> i32 { if a > b { a.wrapping_add(6) } else { b } }

fn sub31(a: i64) -> i64 { a.wrapping_sub(49) }
