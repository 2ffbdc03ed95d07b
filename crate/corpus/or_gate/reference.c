int or_gate(int a, int b) {
    return a | b;
}
