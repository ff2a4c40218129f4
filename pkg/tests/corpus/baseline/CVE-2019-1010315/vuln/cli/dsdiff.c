typedef struct {
    long long ckDataSize;
} DFFChunkHeader;

typedef struct {
    int num_channels;
} WavpackConfig;

int ParseDsdiffHeaderConfig(FILE *infile, WavpackConfig *config)
{
    DFFChunkHeader diff_chunk_header;
    long long total_samples;

    read_chunk(infile, &diff_chunk_header);
    total_samples = diff_chunk_header.ckDataSize / config->num_channels; // TRIGGER
    return total_samples > 0;
}
