#include <stdio.h>
#include <tfhe/tfhe.h>

void homomorphic_not(LweSample *result, const LweSample *a, const TFheGateBootstrappingCloudKeySet *bk);

int main(void) {
    TFheGateBootstrappingParameterSet *params = new_default_gate_bootstrapping_parameters(110);
    TFheGateBootstrappingSecretKeySet *key = new_random_gate_bootstrapping_secret_keyset(params);
    LweSample *a = new_gate_bootstrapping_ciphertext(params);
    LweSample *r = new_gate_bootstrapping_ciphertext(params);

    int passed = 0;
    for (int x = 0; x < 2; x++) {
        bootsSymEncrypt(a, x, key);
        bootsSymEncrypt(r, x, key);
        homomorphic_not(r, a, &key->cloud);
        int ok = bootsSymDecrypt(r, key) == !x;
        passed += ok;
        printf("CASE %d %s\n", x, ok ? "PASS" : "FAIL");
    }
    printf("TOTAL %d/2\n", passed);

    delete_gate_bootstrapping_ciphertext(r);
    delete_gate_bootstrapping_ciphertext(a);
    delete_gate_bootstrapping_secret_keyset(key);
    delete_gate_bootstrapping_parameters(params);
    return passed == 2 ? 0 : 1;
}
