# sedlab - Noisy-Label Learning Laboratory - Modules Package
