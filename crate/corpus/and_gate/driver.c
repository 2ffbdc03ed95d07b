#include <stdio.h>
#include <tfhe/tfhe.h>

void homomorphic_and(LweSample *result, const LweSample *a, const LweSample *b,
                    const TFheGateBootstrappingCloudKeySet *bk);

int main(void) {
    TFheGateBootstrappingParameterSet *params = new_default_gate_bootstrapping_parameters(110);
    uint32_t seed[] = {314, 1592, 657};
    tfhe_random_generator_setSeed(seed, 3);
    TFheGateBootstrappingSecretKeySet *key = new_random_gate_bootstrapping_secret_keyset(params);
    LweSample *a = new_gate_bootstrapping_ciphertext(params);
    LweSample *b = new_gate_bootstrapping_ciphertext(params);
    LweSample *r = new_gate_bootstrapping_ciphertext(params);

    int passed = 0;
    for (int i = 0; i < 4; i++) {
        int x = (i >> 1) & 1, y = i & 1;
        bootsSymEncrypt(a, x, key);
        bootsSymEncrypt(b, y, key);
        bootsSymEncrypt(r, !(x & y), key);
        homomorphic_and(r, a, b, &key->cloud);
        int ok = bootsSymDecrypt(r, key) == (x & y);
        passed += ok;
        printf("CASE %d %s\n", i, ok ? "PASS" : "FAIL");
    }
    printf("TOTAL %d/4\n", passed);

    delete_gate_bootstrapping_ciphertext(r);
    delete_gate_bootstrapping_ciphertext(b);
    delete_gate_bootstrapping_ciphertext(a);
    delete_gate_bootstrapping_secret_keyset(key);
    delete_gate_bootstrapping_parameters(params);
    return passed == 4 ? 0 : 1;
}
