#include <tfhe/tfhe.h>

/* x and result are nb_bits-long two's complement words, least significant
 * bit first. */
void homomorphic_relu(LweSample *result, const LweSample *x, int nb_bits,
                      const TFheGateBootstrappingCloudKeySet *bk) {
    LweSample *keep = new_gate_bootstrapping_ciphertext(bk->params);
    bootsNOT(keep, &x[nb_bits - 1], bk);
    for (int i = 0; i < nb_bits; i++) {
        bootsAND(&result[i], &x[i], keep, bk);
    }
    delete_gate_bootstrapping_ciphertext(keep);
}
