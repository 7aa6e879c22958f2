import csv

from laep.toytrainer.train import TrainResult

LOSS_HEADER = ["iter", "task_loss", "aux_loss", "total_loss"]


def write_loss_curve(result: TrainResult, path: str):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(LOSS_HEADER)
        for it, (task, aux, total) in enumerate(zip(result.task_curve, result.aux_curve, result.loss_curve)):
            writer.writerow([it, repr(float(task)), repr(float(aux)), repr(float(total))])
