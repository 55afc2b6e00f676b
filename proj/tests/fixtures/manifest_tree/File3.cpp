fn ns::three::a
fn ns::three::b
