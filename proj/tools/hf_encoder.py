"""Token-embedding bridge for pretrained encoders.

Reads {"model": id, "texts": [...]} on stdin and writes
{"embeddings": [[[...], ...], ...]} on stdout: one vector per word piece,
special tokens dropped, taken from the layer BERTScore uses by default."""
import json
import sys

LAYERS = {
    "distilbert-base-uncased": 5,
    "roberta-base": 10,
    "microsoft/deberta-xlarge-mnli": 40,
}


def main():
    request = json.load(sys.stdin)
    model_id = request["model"]
    if model_id not in LAYERS:
        sys.exit(f"unsupported model {model_id}")
    import torch
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    model = AutoModel.from_pretrained(model_id, output_hidden_states=True).eval()
    out = []
    with torch.no_grad():
        for text in request["texts"]:
            enc = tokenizer(text, return_tensors="pt", truncation=True,
                            return_special_tokens_mask=True)
            special = enc.pop("special_tokens_mask")[0].bool()
            hidden = model(**enc).hidden_states[LAYERS[model_id]][0]
            out.append(hidden[~special].double().tolist())
    json.dump({"embeddings": out}, sys.stdout)


if __name__ == "__main__":
    main()
