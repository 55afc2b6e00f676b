fn ns::sub::deeper::leaf
