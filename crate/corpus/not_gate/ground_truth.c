#include <tfhe/tfhe.h>

void homomorphic_not(LweSample *result, const LweSample *a, const TFheGateBootstrappingCloudKeySet *bk) {
    bootsNOT(result, a, bk);
}
