int not_gate(int a) {
    return !a;
}
