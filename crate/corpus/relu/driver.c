#include <stdio.h>
#include <tfhe/tfhe.h>

#define NB_BITS 8

void homomorphic_relu(LweSample *result, const LweSample *x, int nb_bits,
                      const TFheGateBootstrappingCloudKeySet *bk);

static const int inputs[] = {-128, -37, -1, 0, 1, 2, 64, 127};
#define NB_CASES ((int)(sizeof inputs / sizeof inputs[0]))

int main(void) {
    TFheGateBootstrappingParameterSet *params = new_default_gate_bootstrapping_parameters(110);
    TFheGateBootstrappingSecretKeySet *key = new_random_gate_bootstrapping_secret_keyset(params);
    LweSample *x = new_gate_bootstrapping_ciphertext_array(NB_BITS, params);
    LweSample *r = new_gate_bootstrapping_ciphertext_array(NB_BITS, params);

    int passed = 0;
    for (int c = 0; c < NB_CASES; c++) {
        unsigned word = (unsigned)inputs[c] & 0xffu;
        for (int i = 0; i < NB_BITS; i++) {
            bootsSymEncrypt(&x[i], (word >> i) & 1, key);
            bootsSymEncrypt(&r[i], !((word >> i) & 1), key);
        }
        homomorphic_relu(r, x, NB_BITS, &key->cloud);
        unsigned got = 0;
        for (int i = 0; i < NB_BITS; i++) {
            got |= (unsigned)bootsSymDecrypt(&r[i], key) << i;
        }
        unsigned want = inputs[c] > 0 ? (unsigned)inputs[c] : 0u;
        int ok = got == want;
        passed += ok;
        printf("CASE %d %s\n", c, ok ? "PASS" : "FAIL");
    }
    printf("TOTAL %d/%d\n", passed, NB_CASES);

    delete_gate_bootstrapping_ciphertext_array(NB_BITS, r);
    delete_gate_bootstrapping_ciphertext_array(NB_BITS, x);
    delete_gate_bootstrapping_secret_keyset(key);
    delete_gate_bootstrapping_parameters(params);
    return passed == NB_CASES ? 0 : 1;
}
